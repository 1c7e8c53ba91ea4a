"""p-th envelopes L_p(s, lam) = sup_s' L(s') - lam |s - s'|^p of univariate losses."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import NumericBracketFailure, UnboundedEnvelope
from .solvers import golden_section_max

INF = math.inf


@dataclass(frozen=True)
class UnivariateLoss:
    """A loss L: R -> (-inf, +inf] with the growth data the envelopes need.

    ``growth_order``/``growth_rate`` describe L(s) ~ rate * |s|^order as |s|
    grows (order 0 means bounded). ``smoothness`` is the Lipschitz constant
    of L' and ``quadratic_growth`` the constant G of the quadratic analysis.
    ``jumps`` lists points where an upper semicontinuous L is discontinuous;
    the numeric envelope always looks there.
    """
    kind: str
    fn: Callable
    derivative: Optional[Callable] = None
    lipschitz: Optional[float] = None
    smoothness: Optional[float] = None
    quadratic_growth: float = 0.0
    growth_order: int = 1
    growth_rate: Optional[float] = None
    conjugate: Optional[Callable] = None
    conjugate_domain: Optional[tuple] = None
    jumps: tuple = ()

    def __call__(self, s):
        return self.fn(s)

    def derivatives(self, s, order: int):
        """Derivatives of order 1..order at s, when known in closed form."""
        table = _DERIVATIVES.get(self.kind)
        if table is None:
            if order == 1 and self.derivative is not None:
                return [self.derivative(s)]
            return None
        return [table(k, s) for k in range(1, order + 1)]

    @classmethod
    def hinge(cls):
        return cls("hinge", lambda s: np.maximum(0.0, 1.0 - np.asarray(s, float)),
                   derivative=lambda s: np.where(np.asarray(s) < 1, -1.0, 0.0),
                   lipschitz=1.0, growth_order=1, growth_rate=1.0,
                   conjugate=lambda g: np.where((g >= -1) & (g <= 0), g, np.inf),
                   conjugate_domain=(-1.0, 0.0))

    @classmethod
    def zero_one(cls):
        return cls("zero_one", lambda s: np.where(np.asarray(s, float) <= 0, 1.0, 0.0),
                   growth_order=0, growth_rate=0.0, jumps=(0.0,))

    @classmethod
    def quadratic(cls):
        return cls("quadratic", lambda s: np.asarray(s, float) ** 2,
                   derivative=lambda s: 2.0 * np.asarray(s, float),
                   smoothness=2.0, quadratic_growth=1.0, growth_order=2, growth_rate=1.0,
                   conjugate=lambda g: np.asarray(g, float) ** 2 / 4.0,
                   conjugate_domain=(-INF, INF))

    @classmethod
    def neg_log(cls):
        def fn(s):
            s = np.asarray(s, float)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(s > 0, -np.log(np.where(s > 0, s, 1.0)), np.inf)

        def conj(g):
            g = np.asarray(g, float)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(g < 0, -1.0 - np.log(np.where(g < 0, -g, 1.0)), np.inf)

        return cls("neg_log", fn, derivative=lambda s: -1.0 / np.asarray(s, float),
                   growth_order=0, growth_rate=0.0, conjugate=conj,
                   conjugate_domain=(-INF, 0.0))

    @classmethod
    def smooth_custom(cls, fn, derivative, smoothness: float, quadratic_growth: float = 0.0,
                      lipschitz: Optional[float] = None, growth_order: Optional[int] = None,
                      growth_rate: Optional[float] = None, conjugate=None, conjugate_domain=None):
        if growth_order is None:
            growth_order = 2 if quadratic_growth > 0 else 1
        if growth_rate is None:
            growth_rate = quadratic_growth if growth_order == 2 else lipschitz
        return cls("smooth_custom", fn, derivative=derivative, lipschitz=lipschitz,
                   smoothness=float(smoothness), quadratic_growth=float(quadratic_growth),
                   growth_order=growth_order, growth_rate=growth_rate,
                   conjugate=conjugate, conjugate_domain=conjugate_domain)

    @classmethod
    def logistic(cls):
        """log(1 + exp(-s)), a convenient smooth test loss."""
        def d(s):
            return -1.0 / (1.0 + np.exp(np.asarray(s, float)))
        base = cls.smooth_custom(lambda s: np.logaddexp(0.0, -np.asarray(s, float)), d,
                                 smoothness=0.25, lipschitz=1.0, growth_order=1, growth_rate=1.0)
        return replace(base, kind="logistic")

    @classmethod
    def parse(cls, name: str) -> "UnivariateLoss":
        makers = {"hinge": cls.hinge, "zero_one": cls.zero_one, "zero-one": cls.zero_one,
                  "quadratic": cls.quadratic, "neg_log": cls.neg_log, "neg-log": cls.neg_log,
                  "logistic": cls.logistic}
        try:
            return makers[name.lower()]()
        except KeyError:
            raise ValueError(f"unknown loss {name!r}") from None


def _quadratic_derivs(k, s):
    return 2.0 * s if k == 1 else (2.0 if k == 2 else 0.0)


def _hinge_derivs(k, s):
    return (-1.0 if s < 1 else 0.0) if k == 1 else 0.0


def _neg_log_derivs(k, s):
    return (-1.0) ** k * math.factorial(k - 1) / s ** k


def _logistic_derivs(k, s):
    sig = 1.0 / (1.0 + math.exp(-s))
    if k == 1:
        return sig - 1.0
    if k == 2:
        return sig * (1 - sig)
    if k == 3:
        return sig * (1 - sig) * (1 - 2 * sig)
    raise ValueError("logistic derivatives beyond order 3 are not tabulated")


_DERIVATIVES = {"quadratic": _quadratic_derivs, "hinge": _hinge_derivs, "neg_log": _neg_log_derivs,
                "logistic": _logistic_derivs}


@dataclass(frozen=True)
class EnvelopeValue:
    value: float
    maximizer: Optional[float] = None


def unbounded(L: UnivariateLoss, p: int, lam: float) -> Optional[bool]:
    """True if the envelope is +inf for every s, False if finite, None if undecided."""
    if L.kind == "neg_log":
        return True  # -log s' blows up at 0+ while the penalty stays bounded
    order = L.growth_order
    rate = L.growth_rate
    if lam == 0:
        return order > 0
    if order < p:
        return False
    if order > p:
        return True
    if rate is None:
        return None
    if lam < rate:
        return True
    if lam > rate:
        return False
    return None


def _closed_form(L, p, s, lam):
    if L.kind == "hinge" and p == 1 and lam >= 1:
        return EnvelopeValue(float(max(0.0, 1.0 - s)), float(s))
    if L.kind == "zero_one" and p == 1:
        value = max(0.0, 1.0 - max(0.0, lam * s))
        return EnvelopeValue(value, 0.0 if (s > 0 and value > 0) else float(s))
    if L.kind == "zero_one" and p == 2:
        value = max(0.0, 1.0 - lam * s * max(0.0, s))
        return EnvelopeValue(value, 0.0 if (s > 0 and value > 0) else float(s))
    if L.kind == "quadratic" and p == 2:
        if lam > 1:
            return EnvelopeValue(lam * s * s / (lam - 1.0), lam * s / (lam - 1.0))
        if lam == 1 and s == 0:
            return EnvelopeValue(0.0, 0.0)
        return EnvelopeValue(INF, None)
    return None


def envelope(L: UnivariateLoss, p: int, s: float, lam: float, strict: bool = False,
             max_doublings: int = 60) -> EnvelopeValue:
    """L_p(s, lam). Returns value +inf when unbounded; ``strict`` raises instead."""
    if p < 1 or int(p) != p:
        raise ValueError("p must be a positive integer")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    s = float(s)
    lam = float(lam)
    result = _closed_form(L, p, s, lam)
    if result is None and unbounded(L, p, lam):
        result = EnvelopeValue(INF, None)
    if result is None:
        result = numeric_envelope(L, p, s, lam, max_doublings)
    if strict and math.isinf(result.value):
        raise UnboundedEnvelope(f"{L.kind} envelope with p={p} is unbounded at lam={lam}")
    return result


def numeric_envelope(L: UnivariateLoss, p: int, s: float, lam: float,
                     max_doublings: int = 60, grid: int = 2001) -> EnvelopeValue:
    """Bracket, dense grid, then golden refinement around the best grid points."""
    def obj(t):
        v = L(t)
        return np.asarray(v, float) - lam * np.abs(s - np.asarray(t, float)) ** p

    width = max([1.0] + [2.0 * abs(j - s) for j in L.jumps])
    for _ in range(max_doublings + 1):
        ts = np.linspace(s - width, s + width, grid)
        vals = obj(ts)
        interior = float(np.max(vals[1:-1]))
        if vals[0] < interior - 1e-9 and vals[-1] < interior - 1e-9:
            break
        width *= 2.0
    else:
        # bounded losses at lam = 0 are flat far out; the widest grid already holds the sup
        if L.growth_order != 0:
            raise NumericBracketFailure(f"no bracket for {L.kind} envelope within {max_doublings} doublings")
    best = interior
    top = np.flatnonzero(vals >= best - max(1e-9, 1e-9 * abs(best)))
    h = ts[1] - ts[0]
    best_t, best_v = None, -INF
    candidates = []
    for idx in np.unique(np.concatenate([top, np.argsort(vals)[-5:]])):
        lo, hi = ts[max(idx - 1, 0)], ts[min(idx + 1, grid - 1)]
        if hi - lo <= 0:
            continue
        t, v = golden_section_max(lambda x: float(obj(x)), (lo, hi), tol=1e-12 * max(1.0, h))
        if float(obj(ts[idx])) > v:
            t, v = ts[idx], float(obj(ts[idx]))
        candidates.append((t, v))
    candidates.append((s, float(obj(s))))
    candidates.extend((float(j), float(obj(j))) for j in L.jumps)
    best_v = max(v for _, v in candidates)
    close = [t for t, v in candidates if v >= best_v - 1e-10 * max(1.0, abs(best_v))]
    best_t = min(close, key=lambda t: abs(t - s))
    return EnvelopeValue(float(best_v), float(best_t))


def envelope_values(L: UnivariateLoss, p: int, s, lam: float) -> np.ndarray:
    """Vectorized L_p over an array of s; closed forms avoid the per-point search."""
    s = np.asarray(s, float)
    if L.kind == "hinge" and p == 1 and lam >= 1:
        return np.maximum(0.0, 1.0 - s)
    if L.kind == "zero_one" and p == 1:
        return np.maximum(0.0, 1.0 - np.maximum(0.0, lam * s))
    if L.kind == "zero_one" and p == 2:
        return np.maximum(0.0, 1.0 - lam * s * np.maximum(0.0, s))
    if L.kind == "quadratic" and p == 2:
        if lam > 1:
            return lam * s * s / (lam - 1.0)
        return np.where((lam == 1) & (s == 0), 0.0, INF)
    if unbounded(L, p, lam):
        return np.full(s.shape, INF)
    return np.array([envelope(L, p, x, lam).value for x in s.ravel()]).reshape(s.shape)


def envelope_limit_check(L: UnivariateLoss, p: int, s: float, lam_schedule) -> list:
    """Envelope values along an increasing lam schedule; they decrease to L(s)."""
    lams = list(lam_schedule)
    if any(b <= a for a, b in zip(lams, lams[1:])):
        raise ValueError("lam schedule must be increasing")
    return [envelope(L, p, s, lam).value for lam in lams]
