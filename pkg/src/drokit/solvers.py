"""Small, dependency-free optimization machinery.

Dense revised simplex for linear programs, golden-section search, derivative
bisection, projected subgradient with Polyak steps, projected gradient with
backtracking, the adaptive golden-ratio algorithm and Euclidean projection
onto the probability simplex.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import BracketError

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-9
    gap: float = 1e-8
    golden: float = 1e-10
    pivot: float = 1e-12
    budget: float = 1e-9
    support: float = 1e-12


def default_tolerances() -> Tolerances:
    """Defaults, optionally overridden by ``DROKIT_TOL``.

    The variable holds either a bare float (applied to ``gap``) or a comma
    separated list such as ``gap=1e-7,feasibility=1e-10``.
    """
    raw = os.environ.get("DROKIT_TOL", "").strip()
    tol = Tolerances()
    if not raw:
        return tol
    if "=" not in raw:
        return replace(tol, gap=float(raw))
    updates = {}
    for item in raw.split(","):
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in Tolerances.__dataclass_fields__:
            raise ValueError(f"unknown tolerance {key!r} in DROKIT_TOL")
        updates[key] = float(value)
    return replace(tol, **updates)


# ---------------------------------------------------------------------------
# Linear programming


@dataclass(frozen=True)
class LinearProgram:
    c: np.ndarray
    A: np.ndarray
    senses: tuple
    b: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    maximize: bool = False

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        A = np.asarray(self.A, dtype=float).reshape(-1, c.size)
        b = np.asarray(self.b, dtype=float).ravel()
        senses = tuple(self.senses)
        if A.shape[0] != b.size or len(senses) != b.size:
            raise ValueError("constraint matrix, senses and rhs disagree in size")
        if any(s not in ("<=", "=", ">=") for s in senses):
            raise ValueError(f"bad constraint sense in {senses}")
        lower = np.zeros(c.size) if self.lower is None else np.asarray(self.lower, float).ravel()
        upper = np.full(c.size, np.inf) if self.upper is None else np.asarray(self.upper, float).ravel()
        if lower.size != c.size or upper.size != c.size:
            raise ValueError("bounds must match the number of variables")
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        for arr in (c, A, b):
            if not np.all(np.isfinite(arr)):
                raise ValueError("LP data must be finite")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "senses", senses)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def shape(self):
        return self.A.shape


@dataclass
class SolveReport:
    status: str
    value: float
    x: Optional[np.ndarray] = None
    duals: Optional[np.ndarray] = None
    iterations: int = 0
    trace: list = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _to_standard_form(lp: LinearProgram):
    """Rewrite as min c'x, Ax = b, x >= 0 with b >= 0.

    Returns the standard-form data plus the affine map back to the original
    variables and the row sign flips needed to report duals.
    """
    m, n = lp.A.shape
    shift = np.zeros(n)
    cols = []  # (original var, sign)
    bound_rows = []  # (std col, ub - lb)
    for i in range(n):
        lo, hi = lp.lower[i], lp.upper[i]
        if np.isfinite(lo):
            shift[i] = lo
            cols.append((i, 1.0))
            if np.isfinite(hi):
                bound_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            shift[i] = hi
            cols.append((i, -1.0))
        else:
            cols.append((i, 1.0))
            cols.append((i, -1.0))
    n_struct = len(cols)
    T = np.zeros((n, n_struct))
    for k, (i, sgn) in enumerate(cols):
        T[i, k] = sgn

    A_rows = lp.A @ T
    rhs = lp.b - lp.A @ shift
    n_slack = sum(s != "=" for s in lp.senses) + len(bound_rows)
    total_rows = m + len(bound_rows)
    A = np.zeros((total_rows, n_struct + n_slack))
    b = np.zeros(total_rows)
    A[:m, :n_struct] = A_rows
    b[:m] = rhs
    k = n_struct
    for r, sense in enumerate(lp.senses):
        if sense == "<=":
            A[r, k] = 1.0
            k += 1
        elif sense == ">=":
            A[r, k] = -1.0
            k += 1
    for j, (col, width) in enumerate(bound_rows):
        A[m + j, col] = 1.0
        A[m + j, k] = 1.0
        b[m + j] = width
        k += 1
    flip = np.where(b < 0, -1.0, 1.0)
    A *= flip[:, None]
    b *= flip
    c = np.zeros(A.shape[1])
    c_struct = T.T @ lp.c
    c[:n_struct] = -c_struct if lp.maximize else c_struct
    return A, b, c, T, shift, flip, n_struct


def _revised_simplex(A, b, c, basis, allowed, artificial, tol, max_iter, bland_after):
    m, n = A.shape
    basis = list(basis)
    degenerate = 0
    use_bland = False
    it = 0
    while it < max_iter:
        it += 1
        B = A[:, basis]
        xB = np.linalg.solve(B, b)
        y = np.linalg.solve(B.T, c[basis])
        d = c - A.T @ y
        d[basis] = 0.0
        d[~allowed] = 0.0
        candidates = np.flatnonzero(d < -tol)
        if candidates.size == 0:
            return "optimal", basis, xB, y, it
        if use_bland:
            e = int(candidates[0])
        else:
            e = int(candidates[np.argmin(d[candidates])])
        u = np.linalg.solve(B, A[:, e])
        best_ratio = np.inf
        leave = -1
        for r in range(m):
            if artificial[basis[r]] and abs(u[r]) > tol:
                ratio = 0.0
            elif u[r] > tol:
                ratio = max(xB[r], 0.0) / u[r]
            else:
                continue
            if ratio < best_ratio - 1e-15 or (
                abs(ratio - best_ratio) <= 1e-15 and basis[r] < basis[leave]
            ):
                best_ratio = ratio
                leave = r
        if leave < 0:
            return "unbounded", basis, xB, y, it
        degenerate = degenerate + 1 if best_ratio <= tol else 0
        if degenerate > bland_after:
            use_bland = True
        basis[leave] = e
    B = A[:, basis]
    return "iteration_limit", basis, np.linalg.solve(B, b), np.linalg.solve(B.T, c[basis]), it


def lp_solve(lp: LinearProgram, tol: Optional[Tolerances] = None, max_iter: int = 50_000,
             bland_after: int = 500) -> SolveReport:
    """Two-phase dense revised simplex.

    Dantzig pricing, switching permanently to Bland's rule after
    ``bland_after`` consecutive degenerate pivots. ``duals`` are shadow prices
    d(optimal value)/d(rhs) for the original rows, so ``<=`` rows of a
    maximization carry nonnegative duals.
    """
    tol = tol or default_tolerances()
    piv = max(tol.pivot, 1e-11)
    A, b, c, T, shift, flip, _ = _to_standard_form(lp)
    m, n = A.shape
    m_orig = lp.A.shape[0]
    if m == 0:
        # only bounds: each variable sits at the bound favoured by its cost
        cost = -lp.c if lp.maximize else lp.c
        x = np.where(cost > 0, lp.lower, np.where(cost < 0, lp.upper, np.where(np.isfinite(lp.lower), lp.lower, 0.0)))
        if not np.all(np.isfinite(x)):
            return SolveReport("unbounded", math.inf if lp.maximize else -math.inf)
        return SolveReport("optimal", float(lp.c @ x), x, np.zeros(0), 0)

    A1 = np.hstack([A, np.eye(m)])
    art = np.zeros(n + m, dtype=bool)
    art[n:] = True
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    allowed = np.ones(n + m, dtype=bool)
    status, basis, xB, _, it1 = _revised_simplex(
        A1, b, c1, list(range(n, n + m)), allowed, np.zeros(n + m, bool), piv, max_iter, bland_after
    )
    if status == "iteration_limit":
        return SolveReport("iteration_limit", math.nan, iterations=it1)
    infeas = float(c1[basis] @ xB)
    if infeas > tol.feasibility * (1.0 + np.abs(b).max()):
        return SolveReport("infeasible", math.nan, iterations=it1)

    c2 = np.concatenate([c, np.zeros(m)])
    allowed = ~art
    status, basis, xB, y, it2 = _revised_simplex(
        A1, b, c2, basis, allowed, art, piv, max_iter - it1, bland_after
    )
    iters = it1 + it2
    if status == "unbounded":
        return SolveReport("unbounded", math.inf if lp.maximize else -math.inf, iterations=iters)
    x_std = np.zeros(n + m)
    x_std[basis] = np.maximum(xB, 0.0)
    x = shift + T @ x_std[: T.shape[1]]
    value = float(lp.c @ x)
    sign = -1.0 if lp.maximize else 1.0
    duals = sign * flip[:m_orig] * y[:m_orig]
    return SolveReport(status, value, x, duals, iters)


# ---------------------------------------------------------------------------
# Univariate search


def golden_section_min(f: Callable[[float], float], bracket: Sequence[float], tol: float = 1e-10,
                       max_iter: int = 500):
    """Minimize a unimodal function on ``[a, b]``; returns ``(x, f(x))``."""
    a, b = float(bracket[0]), float(bracket[1])
    if not (np.isfinite(a) and np.isfinite(b)) or a > b:
        raise BracketError(f"invalid bracket [{a}, {b}]")
    if a == b:
        return a, f(a)
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol * (1.0 + abs(a) + abs(b)) * 0.5:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = f(d)
    if fc <= fd:
        return c, fc
    return d, fd


def golden_section_max(f, bracket, tol=1e-10, max_iter=500):
    x, v = golden_section_min(lambda t: -f(t), bracket, tol, max_iter)
    return x, -v


def bisect_decreasing(g: Callable[[float], float], lo: float, hi: float, tol: float = 1e-13,
                      max_iter: int = 200) -> float:
    """Root of a nonincreasing function with ``g(lo) >= 0 >= g(hi)``."""
    glo, ghi = g(lo), g(hi)
    if glo < 0 or ghi > 0:
        raise BracketError("root not bracketed")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol * (1.0 + abs(mid)):
            break
        if g(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# First-order methods


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = 1} by sorting."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / idx > 0)[-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def projected_subgradient(f, subgrad, x0, project=None, target=None, step=None,
                          max_iter: int = 200_000, tol: float = 1e-8) -> SolveReport:
    """Projected subgradient method with best-iterate tracking.

    With ``target`` the Polyak step (f(x) - target) / |g|^2 is used and the
    run stops once the best value is within ``tol`` of the target. Otherwise
    ``step(k)`` gives the step length (default 1/sqrt(k+1)).
    """
    project = project or (lambda z: z)
    x = project(np.asarray(x0, dtype=float).copy())
    fx = f(x)
    best_x, best_f = x.copy(), fx
    trace = [fx]
    k = 0
    for k in range(1, max_iter + 1):
        if target is not None and best_f - target <= tol:
            return SolveReport("optimal", best_f, best_x, None, k - 1, trace)
        g = np.asarray(subgrad(x), dtype=float)
        gg = float(g @ g)
        if gg == 0.0:
            return SolveReport("optimal", best_f, best_x, None, k, trace)
        if target is not None:
            t = max(fx - target, 0.0) / gg
        else:
            t = (step(k) if step else 1.0 / math.sqrt(k)) / math.sqrt(gg)
        x = project(x - t * g)
        fx = f(x)
        if fx < best_f:
            best_f, best_x = fx, x.copy()
        if k % 100 == 0:
            trace.append(best_f)
    status = "optimal" if target is not None and best_f - target <= tol else "iteration_limit"
    if target is None:
        status = "optimal"
    return SolveReport(status, best_f, best_x, None, k, trace)


def _window_converged(trace, window, tol):
    if len(trace) <= window:
        return False
    old, new = trace[-window - 1], trace[-1]
    return abs(old - new) <= tol * (1.0 + abs(new))


def projected_gradient(f, grad, x0, project, step0: float = 1.0, max_iter: int = 50_000,
                       tol: float = 1e-12, window: int = 500) -> SolveReport:
    """Projected gradient with backtracking on the quadratic upper model."""
    x = project(np.asarray(x0, dtype=float).copy())
    fx, g = f(x), grad(x)
    t = step0
    trace = [fx]
    for k in range(1, max_iter + 1):
        while True:
            x_new = project(x - t * g)
            dx = x_new - x
            f_new = f(x_new)
            if f_new <= fx + g @ dx + (dx @ dx) / (2.0 * t) + 1e-15 * (1 + abs(fx)):
                break
            t *= 0.5
            if t < 1e-20:
                return SolveReport("optimal", fx, x, None, k, trace)
        step_len = math.sqrt(dx @ dx)
        x, fx = x_new, f_new
        g = grad(x)
        trace.append(fx)
        if step_len / t <= tol or _window_converged(trace, window, tol):
            return SolveReport("optimal", fx, x, None, k, trace)
        t *= 1.5
    return SolveReport("iteration_limit", fx, x, None, max_iter, trace)


def graal(f, grad, x0, project, phi: float = 1.5, step_max: float = 1e6,
          max_iter: int = 50_000, tol: float = 1e-12, window: int = 500,
          probe: float = 1e-6) -> SolveReport:
    """Adaptive golden-ratio algorithm for min f over a closed set.

    Steps adapt to a local inverse-Lipschitz estimate of the gradient:
    step_k = min(rho step_{k-1}, phi theta_{k-1} |dx|^2 / (4 step_{k-1} |dg|^2), step_max)
    with rho = 1/phi + 1/phi^2; the anchor is the running golden-ratio
    average of past iterates. Returns the best iterate seen. phi may range
    over (1, GOLDEN]; at GOLDEN rho = 1 and a collapsed step never recovers,
    hence the default 1.5.
    """
    rho = 1.0 / phi + 1.0 / phi ** 2
    x_prev = project(np.asarray(x0, dtype=float).copy())
    g_prev = grad(x_prev)
    # two gradient evaluations give the initial curvature estimate
    scale = probe * (1.0 + np.linalg.norm(x_prev))
    x = project(x_prev - scale * g_prev / max(np.linalg.norm(g_prev), 1e-300))
    g = grad(x)
    dg = np.linalg.norm(g - g_prev)
    dx = np.linalg.norm(x - x_prev)
    step_prev = dx / dg if dg > 0 and dx > 0 else 1.0
    theta = 1.0
    anchor = x.copy()
    best_x, best_f = x_prev, f(x_prev)
    fx = f(x)
    if fx < best_f:
        best_x, best_f = x.copy(), fx
    trace = [best_f]
    for k in range(1, max_iter + 1):
        dx2 = float((x - x_prev) @ (x - x_prev))
        dg2 = float((g - g_prev) @ (g - g_prev))
        local = phi * theta / (4.0 * step_prev) * dx2 / dg2 if dg2 > 0 else np.inf
        step = min(rho * step_prev, local, step_max)
        anchor = ((phi - 1.0) * x + anchor) / phi
        x_new = project(anchor - step * g)
        theta = phi * step / step_prev
        x_prev, g_prev, step_prev = x, g, step
        x = x_new
        g = grad(x)
        fx = f(x)
        if fx < best_f:
            best_x, best_f = x.copy(), fx
        trace.append(best_f)
        if _window_converged(trace, window, tol):
            return SolveReport("optimal", best_f, best_x, None, k, trace)
    return SolveReport("iteration_limit", best_f, best_x, None, max_iter, trace)
