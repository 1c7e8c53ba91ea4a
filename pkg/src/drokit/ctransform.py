"""c-transforms of linear-model losses and the one-dimensional dual DRO value."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import DiscreteDistribution, Norm, dual_norm_witness
from .envelopes import UnivariateLoss, envelope, envelope_values, unbounded
from .errors import DomainError, Infeasible, NonFiniteObjective, UnboundedEnvelope
from .solvers import bisect_decreasing, golden_section_max, golden_section_min

INF = math.inf


@dataclass(frozen=True)
class CTransformResult:
    value: float
    gamma_star: Optional[float] = None
    z_star: Optional[np.ndarray] = None


@dataclass(frozen=True)
class LambdaInterval:
    lower: float
    upper: float

    def __contains__(self, lam) -> bool:
        return self.lower <= lam <= self.upper


@dataclass(frozen=True)
class DroValue:
    value: float
    lambda_star: float
    per_sample_ctransforms: np.ndarray
    scale: float = 1.0


def perspective(f: Callable, x, t: float, recession: Optional[Callable] = None,
                probe: float = 1e12) -> float:
    """t * f(x / t) for t > 0, and the recession function of f at x for t = 0.

    Without an explicit ``recession`` the limit is approximated by f(T x) / T
    at a large T, with growth beyond linear reported as +inf.
    """
    x = np.asarray(x, float)
    if t > 0:
        return float(t * f(x / t))
    if t < 0:
        raise ValueError("perspective needs t >= 0")
    if recession is not None:
        return float(recession(x))
    if not np.any(x):
        return 0.0
    a = float(f(probe * x)) / probe
    b = float(f(10 * probe * x)) / (10 * probe)
    if not math.isfinite(b) or b > a + 1.0:
        return INF
    return b


# conjugates c^{*1}(x, zhat) = sup_z <x, z> - c(z, zhat) for the supported costs


@dataclass(frozen=True)
class CostConjugate:
    fn: Callable
    recession: Optional[Callable] = None

    def __call__(self, x, zhat):
        return self.fn(np.asarray(x, float), np.asarray(zhat, float))


def norm_power_conjugate(norm, p: int) -> CostConjugate:
    norm = Norm.parse(norm)

    def fn(x, zhat):
        r = norm.dual_eval(x)
        base = float(np.dot(x, zhat))
        if p == 1:
            return base if r <= 1 + 1e-12 else INF
        return base + (p - 1) * (r / p) ** (p / (p - 1))

    def rec(x):
        r = norm.dual_eval(x)
        if p == 1:
            return 0.0 if r <= 1 + 1e-12 else INF
        return 0.0 if r == 0 else INF

    return CostConjugate(lambda x, zh: fn(x, zh), lambda x: rec(x))


def _h(u):
    """Conjugate of |log(z)| at z = 1: -1 - log(-u) below -1, u on [-1, 0], +inf above."""
    u = np.asarray(u, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(u < -1, -1.0 - np.log(np.where(u < -1, -u, 1.0)), u)
    return np.where(u > 0, INF, out)


def log_metric_conjugate() -> CostConjugate:
    def fn(x, zhat):
        return float(np.sum(_h(x * zhat)))

    def rec(x):
        return 0.0 if np.all(x <= 0) else INF

    return CostConjugate(fn, rec)


def ctransform_norm_dual(L: UnivariateLoss, norm, p: int, theta, lam: float, zhat) -> CTransformResult:
    """sup_z L(<theta, z>) - lam |z - zhat|^p through the envelope at lam / |theta|_*^p."""
    norm = Norm.parse(norm)
    theta = np.asarray(theta, float)
    zhat = np.asarray(zhat, float)
    s = float(theta @ zhat)
    n, w = dual_norm_witness(norm, theta)
    if n == 0:
        return CTransformResult(float(L(0.0)), 0.0, zhat.copy())
    env = envelope(L, p, s, lam / n ** p)
    if env.maximizer is None:
        return CTransformResult(env.value)
    gamma = (env.maximizer - s) / n
    return CTransformResult(env.value, gamma, zhat + gamma * w)


def _gamma_grid(domain, size):
    lo, hi = domain
    if lo > hi:
        raise DomainError("empty gamma domain")
    t = np.linspace(-8, 8, size // 2)
    pieces = []
    if math.isinf(lo) and math.isinf(hi):
        pieces = [-(10.0 ** t[::-1]), [0.0], 10.0 ** t]
    elif math.isinf(lo):
        pieces = [hi - 10.0 ** t[::-1], [hi]]
    elif math.isinf(hi):
        pieces = [[lo], lo + 10.0 ** t]
    else:
        pieces = [np.linspace(lo, hi, size)]
    return np.unique(np.concatenate([np.asarray(p, float) for p in pieces]))


def ctransform_toland(conjL: Callable, conjC: CostConjugate, theta, lam: float, zhat,
                      gamma_domain, grid: int = 512) -> CTransformResult:
    """sup over gamma in dom L* of lam c^{*1}(gamma theta / lam, zhat) - L*(gamma).

    The objective is generally nonconvex in gamma, so a grid search precedes
    golden-section refinement. At lam = 0 the perspective is the recession
    function of c^{*1}.
    """
    theta = np.asarray(theta, float)
    zhat = np.asarray(zhat, float)
    lo, hi = float(gamma_domain[0]), float(gamma_domain[1])
    if lo > hi:
        raise DomainError("empty gamma domain")

    def obj(g):
        g = float(g)
        lc = float(conjL(g))
        if math.isinf(lc) and lc > 0:
            return -INF
        return perspective(lambda x: conjC(x, zhat), g * theta, lam, conjC.recession) - lc

    gs = _gamma_grid((lo, hi), grid)
    # open endpoints (e.g. gamma < 0 for -log) are not in the domain
    vals = np.array([obj(g) for g in gs])
    if np.all(vals == INF) or not np.any(np.isfinite(vals) | (vals == INF)):
        raise NonFiniteObjective("objective is not finite anywhere on the gamma domain")
    if np.any(vals == INF):
        return CTransformResult(INF, float(gs[int(np.argmax(vals))]))
    vals = np.where(np.isnan(vals), -INF, vals)
    k = int(np.argmax(vals))
    best_g, best_v = float(gs[k]), float(vals[k])
    a = gs[max(k - 1, 0)]
    b = gs[min(k + 1, gs.size - 1)]
    if b > a:
        g, v = golden_section_max(obj, (a, b), tol=1e-12 * max(1.0, abs(b - a)))
        if v > best_v:
            best_g, best_v = g, v
    return CTransformResult(best_v, best_g)


def quadratic_lambda_interval(theta, norm, eps: float, M: float, second_moment: float) -> LambdaInterval:
    """Interval holding a minimizer of lam eps + E l_c for 2-power costs (c-transform scale)."""
    if eps <= 0 or M < 0 or second_moment < 0:
        raise ValueError("need eps > 0, M >= 0, second_moment >= 0")
    n = Norm.parse(norm).dual_eval(theta)
    lower = math.sqrt(second_moment * n * n / (4 * eps))
    upper = math.sqrt(second_moment * n * n / eps) + M * n * n / 2
    return LambdaInterval(lower, upper)


def smooth_region(eps: float, L_low: float, R: float, M: float) -> bool:
    """True when 0 < eps < L_low / (R M)^2, so the dual is solved above M |theta|_*^2 / 2."""
    if R * M == 0:
        return eps > 0
    return 0 < eps < L_low / (R * M) ** 2


def quadratic_ctransform(L: UnivariateLoss, norm, theta, lam: float, zhat) -> CTransformResult:
    """c-transform for cost |z - zhat|^2 and an M-smooth loss with growth G."""
    norm = Norm.parse(norm)
    theta = np.asarray(theta, float)
    zhat = np.asarray(zhat, float)
    if L.smoothness is None or L.derivative is None:
        raise ValueError("quadratic_ctransform needs a smooth loss with a derivative")
    n, w = dual_norm_witness(norm, theta)
    s = float(theta @ zhat)
    if n == 0:
        return CTransformResult(float(L(0.0)), 0.0, zhat.copy())
    if lam < L.quadratic_growth * n * n:
        raise UnboundedEnvelope("lam below the quadratic growth threshold")
    if lam > L.smoothness * n * n / 2:
        dL = lambda g: float(n * L.derivative(s + g * n) - 2 * lam * g)
        d0 = dL(0.0)
        if d0 == 0:
            gamma = 0.0
        else:
            step = 1.0
            edge = step if d0 > 0 else -step
            while (dL(edge) > 0) == (d0 > 0):
                step *= 2
                edge = step if d0 > 0 else -step
            lo, hi = sorted((0.0, edge))
            gamma = bisect_decreasing(dL, lo, hi)
        bound = n / (2 * lam) * abs(float(L.derivative(s)))
        assert abs(gamma) >= bound * (1 - 1e-9) - 1e-12, "maximizer violates the magnitude bound"
        value = float(L(s + gamma * n)) - lam * gamma * gamma
        return CTransformResult(value, gamma, zhat + gamma * w)
    return ctransform_norm_dual(L, norm, 2, theta, lam, zhat)


def _lambda_floor(L: UnivariateLoss, p: int):
    """Smallest envelope-scale lam at which the envelope can be finite, and whether it is included."""
    if L.kind == "neg_log" or L.growth_order > p:
        return None, False
    if L.growth_order < p:
        return 0.0, L.growth_order == 0
    rate = L.growth_rate if L.growth_rate is not None else 0.0
    return float(rate), True


def dro_value_via_envelope(L: UnivariateLoss, norm, p: int, theta, P: DiscreteDistribution,
                           eps: float, rel_tol: float = 1e-9) -> DroValue:
    """inf over lam >= 0 of lam eps |theta|_*^p + E L_p(<theta, Z>, lam).

    ``lambda_star`` is reported in the envelope scale; multiply by
    |theta|_*^p for the c-transform scale.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    norm = Norm.parse(norm)
    theta = np.asarray(theta, float)
    s = P.atoms @ theta
    n = norm.dual_eval(theta)
    scale = n ** p
    if n == 0:
        vals = np.full(P.size, float(L(0.0)))
        return DroValue(float(P.weights @ vals), 0.0, vals, 0.0)
    floor, closed = _lambda_floor(L, p)
    if floor is None:
        raise Infeasible(f"{L.kind} loss grows faster than the transport cost; the worst case is +inf")

    def F(lam):
        vals = envelope_values(L, p, s, lam)
        if np.any(np.isinf(vals)):
            return INF
        return lam * eps * scale + float(P.weights @ vals)

    hi = max(1.0, 2 * floor)
    prev = F(hi)
    rises = 0
    for _ in range(400):
        nxt = F(2 * hi)
        rises = rises + 1 if nxt > prev else 0
        hi *= 2
        prev = nxt
        if rises >= 2:
            break
    lo = floor
    tol = rel_tol * max(1.0, hi)
    lam, val = golden_section_min(F, (lo, hi), tol=tol)
    candidates = [(val, lam)]
    if closed:
        candidates.append((F(lo), lo))
    val, lam = min(candidates)
    if not math.isfinite(val):
        raise Infeasible("dual objective is +inf for every lam")
    vals = envelope_values(L, p, s, lam)
    return DroValue(float(lam * eps * scale + P.weights @ vals), float(lam), vals, float(scale))
