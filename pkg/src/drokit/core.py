"""Norms, discrete distributions, transport costs and exact discrete OT."""
from __future__ import annotations

import csv
import json
from collections import deque
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DomainError, Infeasible

WEIGHT_TOL = 1e-12


class Norm(str, Enum):
    ONE = "one"
    TWO = "two"
    INF = "infinity"

    @classmethod
    def parse(cls, name) -> "Norm":
        if isinstance(name, Norm):
            return name
        aliases = {"1": cls.ONE, "one": cls.ONE, "l1": cls.ONE,
                   "2": cls.TWO, "two": cls.TWO, "l2": cls.TWO,
                   "inf": cls.INF, "infinity": cls.INF, "linf": cls.INF, "max": cls.INF}
        try:
            return aliases[str(name).lower()]
        except KeyError:
            raise ValueError(f"unknown norm {name!r}") from None

    @property
    def dual(self) -> "Norm":
        return {Norm.ONE: Norm.INF, Norm.TWO: Norm.TWO, Norm.INF: Norm.ONE}[self]

    def eval(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self is Norm.ONE:
            return float(np.abs(x).sum(axis=-1)) if x.ndim == 1 else np.abs(x).sum(axis=-1)
        if self is Norm.TWO:
            return float(np.linalg.norm(x)) if x.ndim == 1 else np.linalg.norm(x, axis=-1)
        return float(np.abs(x).max(initial=0.0)) if x.ndim == 1 else np.abs(x).max(axis=-1, initial=0.0)

    def dual_eval(self, x) -> float:
        return self.dual.eval(x)


def dual_norm_witness(norm: Norm, x):
    """Dual norm of ``x`` and a unit-ball point ``w`` with <w, x> = |x|_*."""
    norm = Norm.parse(norm)
    x = np.asarray(x, dtype=float)
    w = np.zeros_like(x)
    if norm is Norm.TWO:
        value = float(np.linalg.norm(x))
        if value > 0:
            w = x / value
    elif norm is Norm.ONE:
        # unit ball of the 1-norm: a signed basis vector
        i = int(np.argmax(np.abs(x))) if x.size else 0
        value = float(np.abs(x).max(initial=0.0))
        if value > 0:
            w[i] = np.sign(x[i])
    else:
        value = float(np.abs(x).sum())
        w = np.sign(x)
    return value, w


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        weights = np.array(self.weights, dtype=float).ravel()
        if atoms.shape[0] != weights.size:
            raise ValueError("atoms and weights differ in length")
        if weights.size == 0:
            raise ValueError("empty distribution")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atoms must be finite")
        if np.any(weights <= 0):
            raise ValueError("weights must be strictly positive")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {weights.sum()!r}, not 1")
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, atoms) -> "DiscreteDistribution":
        atoms = np.asarray(atoms, dtype=float)
        n = atoms.shape[0]
        return cls(atoms, np.full(n, 1.0 / n))

    @classmethod
    def dirac(cls, point) -> "DiscreteDistribution":
        return cls(np.atleast_2d(np.asarray(point, float)), [1.0])

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def expect(self, values) -> float:
        return float(np.dot(self.weights, np.asarray(values, dtype=float)))

    def to_json(self) -> dict:
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "DiscreteDistribution":
        return cls(np.asarray(data["atoms"], float), np.asarray(data["weights"], float))


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.array(self.labels, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise ValueError("features and labels differ in length")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        w = np.full(y.size, 1.0 / y.size) if self.weights is None else np.array(self.weights, float).ravel()
        DiscreteDistribution(np.zeros((y.size, 1)), w)  # validates the weights
        for arr in (X, y, w):
            arr.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.labels.size

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def signed_features(self) -> np.ndarray:
        return self.labels[:, None] * self.features

    def as_distribution(self) -> DiscreteDistribution:
        """Atoms (x, y) with the label as last coordinate."""
        return DiscreteDistribution(np.column_stack([self.features, self.labels]), self.weights)

    @classmethod
    def read_csv(cls, path) -> "LabeledDataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not header or header[-1].strip() != "y":
                raise ValueError("dataset CSV must have header x1,...,xk,y")
            rows = [[float(v) for v in row] for row in reader if row]
        arr = np.asarray(rows, dtype=float)
        return cls(arr[:, :-1], arr[:, -1])

    def write_csv(self, path) -> None:
        k = self.dim
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{i + 1}" for i in range(k)] + ["y"])
            for x, y in zip(self.features, self.labels):
                writer.writerow([format_float(v) for v in x] + [str(int(y))])


def format_float(v: float) -> str:
    return format(float(v), ".17g")


def read_distribution(path) -> DiscreteDistribution:
    return DiscreteDistribution.from_json(json.loads(Path(path).read_text()))


def write_distribution(dist: DiscreteDistribution, path) -> None:
    Path(path).write_text(json.dumps(dist.to_json()))


@dataclass(frozen=True)
class TransportCost:
    kind: str
    norm: Optional[Norm] = None
    power: int = 1

    def __post_init__(self):
        if self.kind not in ("norm_power", "feature_label", "log_metric"):
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.kind != "log_metric" and self.norm is None:
            raise ValueError(f"{self.kind} cost needs a norm")
        if self.norm is not None:
            object.__setattr__(self, "norm", Norm.parse(self.norm))
        if int(self.power) != self.power or self.power < 1:
            raise ValueError("power must be an integer >= 1")

    @classmethod
    def norm_power(cls, norm, p: int = 1) -> "TransportCost":
        return cls("norm_power", Norm.parse(norm), int(p))

    @classmethod
    def feature_label(cls, norm) -> "TransportCost":
        return cls("feature_label", Norm.parse(norm))

    @classmethod
    def log_metric(cls) -> "TransportCost":
        return cls("log_metric")

    @property
    def symmetric(self) -> bool:
        return True

    def eval(self, z, zhat) -> float:
        return float(self.matrix(np.atleast_2d(z), np.atleast_2d(zhat))[0, 0])

    def matrix(self, Z, Zhat) -> np.ndarray:
        """Pairwise costs c(Z[i], Zhat[j]); forbidden pairs are +inf."""
        Z = np.atleast_2d(np.asarray(Z, float))
        Zhat = np.atleast_2d(np.asarray(Zhat, float))
        if self.kind == "log_metric":
            if np.any(Z <= 0) or np.any(Zhat <= 0):
                raise DomainError("log-metric cost needs strictly positive points")
            diff = np.log(Z)[:, None, :] - np.log(Zhat)[None, :, :]
            return np.abs(diff).sum(axis=-1)
        if self.kind == "norm_power":
            return self.norm.eval(Z[:, None, :] - Zhat[None, :, :]) ** self.power
        X, y = Z[:, :-1], Z[:, -1]
        Xh, yh = Zhat[:, :-1], Zhat[:, -1]
        C = self.norm.eval(X[:, None, :] - Xh[None, :, :])
        C = np.atleast_2d(C).reshape(Z.shape[0], Zhat.shape[0])
        return np.where(y[:, None] == yh[None, :], C, np.inf)

    @classmethod
    def parse(cls, name: str, power: int = 1) -> "TransportCost":
        name = name.lower()
        if name in ("log", "log_metric", "logmetric"):
            return cls.log_metric()
        for prefix, kind in (("label", "feature_label"), ("norm", "norm_power")):
            if name.startswith(prefix):
                norm = Norm.parse(name[len(prefix):].lstrip("_-"))
                return cls.feature_label(norm) if kind == "feature_label" else cls.norm_power(norm, power)
        raise ValueError(f"unknown cost {name!r}")


@dataclass(frozen=True, eq=False)
class CouplingPlan:
    moves: tuple
    total_cost: float
    flow: np.ndarray

    def marginals(self):
        return self.flow.sum(axis=1), self.flow.sum(axis=0)


# ---------------------------------------------------------------------------
# Transportation simplex


def _northwest_corner(a, b):
    n, m = a.size, b.size
    ra, rb = a.copy(), b.copy()
    flow = np.zeros((n, m))
    basis = []
    i = j = 0
    while True:
        x = min(ra[i], rb[j])
        if i == n - 1 and j == m - 1:
            x = max(ra[i], rb[j], 0.0) if abs(ra[i] - rb[j]) < 1e-9 else x
        flow[i, j] = x
        basis.append((i, j))
        ra[i] -= x
        rb[j] -= x
        if i == n - 1 and j == m - 1:
            break
        if i == n - 1:
            j += 1
        elif j == m - 1:
            i += 1
        elif ra[i] <= rb[j]:
            i += 1
        else:
            j += 1
    return flow, basis


def _tree_path(basis, n, m, src_row, dst_col):
    """Cells on the basis-tree path from row node ``src_row`` to column ``dst_col``."""
    adj = [[] for _ in range(n + m)]
    for cell in basis:
        i, j = cell
        adj[i].append((n + j, cell))
        adj[n + j].append((i, cell))
    target = n + dst_col
    prev = {src_row: None}
    queue = deque([src_row])
    while queue:
        node = queue.popleft()
        if node == target:
            break
        for nxt, cell in adj[node]:
            if nxt not in prev:
                prev[nxt] = (node, cell)
                queue.append(nxt)
    path = []
    node = target
    while prev[node] is not None:
        node, cell = prev[node]
        path.append(cell)
    return path[::-1]


def _potentials(basis, cost, n, m):
    u = np.full(n, np.nan)
    v = np.full(m, np.nan)
    rows = [[] for _ in range(n)]
    cols = [[] for _ in range(m)]
    for i, j in basis:
        rows[i].append(j)
        cols[j].append(i)
    u[0] = 0.0
    stack = [("r", 0)]
    while stack:
        kind, k = stack.pop()
        if kind == "r":
            for j in rows[k]:
                if np.isnan(v[j]):
                    v[j] = cost[k, j] - u[k]
                    stack.append(("c", j))
        else:
            for i in cols[k]:
                if np.isnan(u[i]):
                    u[i] = cost[i, k] - v[k]
                    stack.append(("r", i))
    return u, v


def _transport_simplex(a, b, cost, allowed, flow, basis, tol, max_iter, bland_after=200):
    n, m = cost.shape
    in_basis = np.zeros((n, m), dtype=bool)
    for cell in basis:
        in_basis[cell] = True
    degenerate = 0
    use_bland = False
    for _ in range(max_iter):
        u, v = _potentials(basis, cost, n, m)
        red = cost - u[:, None] - v[None, :]
        red[in_basis | ~allowed] = 0.0
        neg = red < -tol
        if not neg.any():
            return flow, basis, u, v
        if use_bland:
            i, j = map(int, np.argwhere(neg)[0])
        else:
            i, j = map(int, np.unravel_index(np.argmin(red), red.shape))
        path = _tree_path(basis, n, m, i, j)
        k = len(path)
        # signs alternate along the cycle, starting with '-' at the cell in column j
        minus = [path[t] for t in range(k) if (k - 1 - t) % 2 == 0]
        plus = [path[t] for t in range(k) if (k - 1 - t) % 2 == 1]
        blocked = [c for c in plus if not allowed[c]]
        if blocked:
            step, leave = 0.0, min(blocked)
        else:
            step = min(flow[c] for c in minus)
            leave = min(c for c in minus if flow[c] <= step + 1e-15)
        for c in minus:
            flow[c] = max(flow[c] - step, 0.0)
        for c in plus:
            flow[c] += step
        flow[i, j] += step
        flow[leave] = 0.0
        basis.remove(leave)
        in_basis[leave] = False
        basis.append((i, j))
        in_basis[i, j] = True
        degenerate = degenerate + 1 if step <= 1e-15 else 0
        if degenerate > bland_after:
            use_bland = True
    raise RuntimeError("transportation simplex hit its iteration limit")


def solve_transport(a, b, cost, tol: float = 1e-12, max_iter: int = 100_000):
    """Exact min-cost transport between masses ``a`` and ``b``.

    Infinite cost entries are forbidden cells: a first phase minimizes the
    mass they carry and the second phase never lets them enter the basis.
    Returns ``(value, flow)``.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    cost = np.asarray(cost, float)
    allowed = np.isfinite(cost)
    flow, basis = _northwest_corner(a, b)
    scale = max(1.0, float(np.abs(cost[allowed]).max(initial=0.0)))
    if not allowed.all():
        phase1 = (~allowed).astype(float)
        flow, basis, _, _ = _transport_simplex(a, b, phase1, np.ones_like(allowed), flow, basis, tol, max_iter)
        if flow[~allowed].sum() > 1e-10:
            raise Infeasible("every coupling moves mass along an infinite-cost pair")
    finite_cost = np.where(allowed, cost, 0.0)
    flow, basis, _, _ = _transport_simplex(a, b, finite_cost, allowed, flow, basis, tol * scale, max_iter)
    value = float((flow[allowed] * cost[allowed]).sum())
    return value, flow


def ot_distance(P: DiscreteDistribution, Q: DiscreteDistribution, cost: TransportCost):
    """Optimal transport discrepancy between two discrete distributions.

    Returns the optimal value and a coupling plan (rows index ``P``'s atoms,
    columns ``Q``'s). Raises ``Infeasible`` when no finite-cost coupling
    exists.
    """
    C = cost.matrix(P.atoms, Q.atoms)
    value, flow = solve_transport(P.weights, Q.weights, C)
    moves = tuple((int(i), int(j), float(flow[i, j])) for i, j in np.argwhere(flow > 0))
    return value, CouplingPlan(moves, value, flow)
