"""Optimal-transport distributionally robust optimization primitives."""
from .errors import DrokitError

__version__ = "0.1.0"
