"""Distributionally robust SVM: primal, light dual, Nash strategies of nature, saddle checks."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DiscreteDistribution, LabeledDataset, Norm, TransportCost, dual_norm_witness, ot_distance
from .errors import InfeasibleQ, InvalidAlpha, NoConvergence
from .solvers import LinearProgram, lp_solve, projected_subgradient

SUPPORT_TOL = 1e-8
BUDGET_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SvmPrimalSolution:
    theta: np.ndarray
    lam: float
    slacks: np.ndarray
    value: float
    gap: float = 0.0


@dataclass(frozen=True, eq=False)
class DualLightSolution:
    q: np.ndarray
    value: float
    xi: np.ndarray
    support: np.ndarray  # J+ as indices
    zero: np.ndarray     # J0 as indices
    theta: Optional[np.ndarray] = None  # multiplier-recovered primal point


@dataclass(frozen=True, eq=False)
class PerturbedDataset:
    sources: np.ndarray
    masses: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    provenance: str = "worst_case"
    spend: float = 0.0

    def as_dataset(self) -> LabeledDataset:
        keep = self.masses > 0
        m = self.masses[keep]
        return LabeledDataset(self.features[keep], self.labels[keep], m / m.sum())

    def expected_hinge(self, theta) -> float:
        margins = self.labels * (self.features @ np.asarray(theta, float))
        return float(self.masses @ np.maximum(0.0, 1.0 - margins))


@dataclass(frozen=True, eq=False)
class NashCertificate:
    theta: np.ndarray
    support: np.ndarray
    xi: np.ndarray
    q: np.ndarray
    left_residual: float
    right_residual: float
    worst_case_value: float
    q_value: float
    best_response_value: float

    def to_json(self) -> dict:
        return {"theta": self.theta.tolist(), "support": self.support.tolist(), "xi": self.xi.tolist(),
                "q": self.q.tolist(), "left_residual": self.left_residual,
                "right_residual": self.right_residual, "worst_case_value": self.worst_case_value,
                "q_value": self.q_value, "best_response_value": self.best_response_value}


def hinge_losses(data: LabeledDataset, theta) -> np.ndarray:
    return np.maximum(0.0, 1.0 - data.labels * (data.features @ np.asarray(theta, float)))


def primal_objective(data: LabeledDataset, norm, eps: float, theta) -> float:
    norm = Norm.parse(norm)
    return eps * norm.dual_eval(theta) + float(data.weights @ hinge_losses(data, theta))


# --- light dual: max sum q s.t. |sum q_j y_j x_j| <= eps, 0 <= q <= w


def _dual_lp(A, w, eps, norm):
    d, J = A.shape
    if norm is Norm.INF:
        rows = np.vstack([A, -A])
        lp = LinearProgram(np.ones(J), rows, ("<=",) * (2 * d), np.full(2 * d, eps),
                           lower=np.zeros(J), upper=w, maximize=True)
        res = lp_solve(lp)
        mu = res.duals
        theta = mu[:d] - mu[d:]
        return res, res.x, theta
    # 1-norm: auxiliary t >= |Aq|, sum t <= eps
    I = np.eye(d)
    rows = np.vstack([np.hstack([A, -I]), np.hstack([-A, -I]),
                      np.concatenate([np.zeros(J), np.ones(d)])[None, :]])
    c = np.concatenate([np.ones(J), np.zeros(d)])
    lp = LinearProgram(c, rows, ("<=",) * (2 * d + 1), np.concatenate([np.zeros(2 * d), [eps]]),
                       lower=np.zeros(J + d), upper=np.concatenate([w, np.full(d, np.inf)]), maximize=True)
    res = lp_solve(lp)
    mu = res.duals
    theta = mu[:d] - mu[d:2 * d]
    return res, res.x[:J], theta


def _dual_barrier(A, w, eps, gap_tol=1e-9, mu=10.0, max_newton=100):
    """Log-barrier path following for the 2-norm light dual."""
    d, J = A.shape
    aw = np.linalg.norm(A @ w)
    c = 0.5 if aw == 0 else min(0.5, 0.5 * eps / aw)
    q = c * w
    m = 2 * J + 1
    t = 1.0
    eps2 = eps * eps

    def phi(q, t):
        r = eps2 - float((A @ q) @ (A @ q))
        if np.any(q <= 0) or np.any(q >= w) or r <= 0:
            return -np.inf
        return t * q.sum() + np.log(q).sum() + np.log(w - q).sum() + math.log(r)

    G = A.T @ A
    while True:
        for _ in range(max_newton):
            Aq = A @ q
            r = eps2 - float(Aq @ Aq)
            Gq = G @ q
            grad = t + 1.0 / q - 1.0 / (w - q) - 2.0 * Gq / r
            H = -np.diag(1.0 / q ** 2 + 1.0 / (w - q) ** 2) - 2.0 * G / r - 4.0 * np.outer(Gq, Gq) / r ** 2
            step = np.linalg.solve(H, -grad)
            dec = float(grad @ step)
            if dec / 2 <= 1e-8:
                break
            s = min(1.0, 0.99 * _max_step(A, q, w, step, eps2))
            f0 = phi(q, t)
            while phi(q + s * step, t) < f0 + 0.25 * s * float(grad @ step):
                s *= 0.5
                if s < 1e-10:
                    break
            if s < 1e-10:
                break  # no numerical progress left at this barrier weight
            q = q + s * step
        if m / t <= gap_tol:
            break
        t *= mu
    return q, _align_theta(A, w, eps, A @ q)


def _align_theta(A, w, eps, direction):
    """Best theta along ``direction``: the 2-norm optimum is parallel to A q*.

    min over kappa >= 0 of eps kappa + sum w_j (1 - kappa a_j.u)_+ is convex
    and piecewise linear, so one of its breakpoints is optimal.
    """
    nrm = np.linalg.norm(direction)
    if nrm == 0:
        return np.zeros(A.shape[0])
    u = direction / nrm
    au = A.T @ u
    kappas = np.concatenate([[0.0], 1.0 / au[au > 0]])
    vals = eps * kappas + np.maximum(0.0, 1.0 - np.outer(kappas, au)) @ w
    return kappas[int(np.argmin(vals))] * u


def _max_step(A, q, w, step, eps2):
    """Largest s keeping q + s step strictly inside the box and the norm ball."""
    with np.errstate(divide="ignore"):
        up = np.where(step > 0, (w - q) / step, np.inf)
        down = np.where(step < 0, -q / step, np.inf)
    s = float(min(up.min(), down.min()))
    Aq, As = A @ q, A @ step
    a, b, c = float(As @ As), 2.0 * float(Aq @ As), float(Aq @ Aq) - eps2
    if a > 0:
        s = min(s, (-b + math.sqrt(b * b - 4 * a * c)) / (2 * a))
    return s


def solve_dual_light(data: LabeledDataset, norm, eps: float) -> DualLightSolution:
    """Least-favorable light dual; exact LP for the 1- and inf-norms, a barrier method for the 2-norm."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    norm = Norm.parse(norm)
    A = data.signed_features().T  # columns y_j x_j
    w = data.weights
    if not np.any(A):
        q = w.copy()
        theta = np.zeros(data.dim)
    elif norm is Norm.TWO:
        if np.linalg.norm(A @ w) <= eps:
            q, theta = w.copy(), np.zeros(data.dim)
        else:
            q, theta = _dual_barrier(A, w, eps)
    else:
        res, q, theta = _dual_lp(A, w, eps, norm)
        if not res.optimal:
            raise NoConvergence(f"dual LP ended with status {res.status}")
    q = np.clip(q, 0.0, w)
    q[q < SUPPORT_TOL * w] = 0.0
    q[q > (1 - SUPPORT_TOL) * w] = w[q > (1 - SUPPORT_TOL) * w]
    agg = norm.eval(A @ q)
    if agg > eps:
        q *= eps / agg
    support = np.flatnonzero(q > 0)
    zero = np.flatnonzero(q == 0)
    return DualLightSolution(q, float(q.sum()), -(A @ q), support, zero, theta)


def solve_primal_svm(data: LabeledDataset, norm, eps: float, tol: float = 1e-7,
                     max_iter: int = 200_000, warm_start: bool = True,
                     dual: Optional[DualLightSolution] = None) -> SvmPrimalSolution:
    """min eps |theta|_* + E hinge, by Polyak subgradient steps aimed at the light-dual value."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    norm = Norm.parse(norm)
    dual = dual or solve_dual_light(data, norm, eps)
    X = data.features
    y = data.labels
    w = data.weights

    def f(theta):
        return primal_objective(data, norm, eps, theta)

    def g(theta):
        active = y * (X @ theta) < 1
        _, wit = dual_norm_witness(norm.dual, theta)
        return eps * wit - (w * active * y) @ X

    x0 = dual.theta if (warm_start and dual.theta is not None) else np.zeros(data.dim)
    res = projected_subgradient(f, g, x0, target=dual.value, max_iter=max_iter, tol=tol)
    gap = res.value - dual.value
    if gap > tol:
        raise NoConvergence(f"duality gap {gap:.3g} above {tol:.3g} after {res.iterations} iterations")
    theta = res.x
    return SvmPrimalSolution(theta, norm.dual_eval(theta), hinge_losses(data, theta), res.value, gap)


# --- strategies of nature


def nash_family(data: LabeledDataset, sol: DualLightSolution, alpha, norm=None) -> PerturbedDataset:
    """Nash strategy Q*(alpha): the budget xi is split across J+ in proportions alpha.

    The plan from the samples spends |xi| whatever alpha is; pass ``norm`` to record it.
    """
    alpha = np.asarray(alpha, float).ravel()
    if alpha.size != data.size or np.any(alpha < 0) or abs(alpha.sum() - 1) > 1e-9:
        raise InvalidAlpha("alpha must be a probability vector over the samples")
    if np.any(alpha[sol.zero] != 0):
        raise InvalidAlpha("alpha must vanish outside the support of the light dual")
    src, mass, feats, labels = [], [], [], []
    for j in range(data.size):
        x, y, wj, qj = data.features[j], data.labels[j], data.weights[j], sol.q[j]
        stay = wj - qj
        if stay > 0:
            src.append(j); mass.append(stay); feats.append(x); labels.append(y)
        if qj > 0:
            shift = alpha[j] * y * sol.xi / qj
            src.append(j); mass.append(qj); feats.append(x + shift); labels.append(y)
    return PerturbedDataset(np.array(src), np.array(mass), np.array(feats), np.array(labels),
                            "least_favorable", Norm.parse(norm).eval(sol.xi) if norm else math.nan)


def uniform_alpha(sol: DualLightSolution, J: int) -> np.ndarray:
    alpha = np.zeros(J)
    alpha[sol.support] = 1.0 / sol.support.size
    return alpha


def single_alpha(sol: DualLightSolution, J: int, j: int) -> np.ndarray:
    alpha = np.zeros(J)
    alpha[j] = 1.0
    return alpha


def transport_spend(data: LabeledDataset, Q: PerturbedDataset, norm) -> float:
    """Cost of the plan that moves each emitted atom from its source sample."""
    norm = Norm.parse(norm)
    moved = Q.features - data.features[Q.sources]
    return float(Q.masses @ np.atleast_1d(norm.eval(moved)))


def worst_case_value(data: LabeledDataset, norm, eps: float, theta) -> float:
    """sup over the ball of E hinge(theta) = empirical hinge + eps |theta|_*."""
    norm = Norm.parse(norm)
    theta = np.asarray(theta, float)
    if not np.any(theta):
        return 1.0
    return float(data.weights @ hinge_losses(data, theta)) + eps * norm.dual_eval(theta)


def worst_case_for_theta(data: LabeledDataset, norm, eps: float, theta,
                         shortfall: float = 1e-8) -> PerturbedDataset:
    """A (near-)maximizer of E_Q hinge(theta) over the feature-label OT ball.

    When some sample sits on the active hinge piece its whole mass moves
    eps / w_j along -y * (unit witness of theta), which attains the supremum.
    Otherwise the supremum is only approached; a small mass moves far enough
    to come within ``shortfall`` of it.
    """
    norm = Norm.parse(norm)
    theta = np.asarray(theta, float)
    X, y, w = data.features, data.labels, data.weights
    idx = np.arange(data.size)
    if not np.any(theta):
        return PerturbedDataset(idx, w.copy(), X.copy(), y.copy(), "worst_case", 0.0)
    n, wit = dual_norm_witness(norm, theta)
    margins = y * (X @ theta)
    active = np.flatnonzero(margins <= 1)
    if active.size:
        j = int(active[0])
        move = w[j]
    else:
        j = int(np.argmin(margins))
        move = min(w[j], shortfall / (margins[j] - 1.0))
    src = list(idx)
    mass = list(w)
    feats = list(X)
    labels = list(y)
    mass[j] = w[j] - move
    dist = eps / move
    src.append(j); mass.append(move); feats.append(X[j] - y[j] * dist * wit); labels.append(y[j])
    mass = np.array(mass)
    keep = mass > 0
    return PerturbedDataset(np.array(src)[keep], mass[keep], np.array(feats)[keep],
                            np.array(labels)[keep], "worst_case", eps)


def min_empirical_hinge(Q: PerturbedDataset, max_iter: int = 50_000):
    """min over theta of E_Q hinge(theta) as an LP in (theta, slacks)."""
    X, y, m = Q.features, Q.labels, Q.masses
    K, d = X.shape
    # variables: theta (free), s >= 0 ; rows: y x theta + s >= 1
    A = np.hstack([y[:, None] * X, np.eye(K)])
    c = np.concatenate([np.zeros(d), m])
    lp = LinearProgram(c, A, (">=",) * K, np.ones(K),
                       lower=np.concatenate([np.full(d, -np.inf), np.zeros(K)]))
    res = lp_solve(lp, max_iter=max_iter)
    if not res.optimal:
        raise NoConvergence(f"best-response LP ended with status {res.status}")
    return res.value, res.x[:d]


def verify_saddle(data: LabeledDataset, norm, eps: float, theta, Q: PerturbedDataset,
                  theta_probe_budget: int = 50_000,
                  sol: Optional[DualLightSolution] = None) -> NashCertificate:
    """Residuals of the saddle condition for (theta, Q); both are ~0 at a Nash equilibrium."""
    norm = Norm.parse(norm)
    theta = np.asarray(theta, float)
    spend = transport_spend(data, Q, norm)
    if spend > eps + BUDGET_TOL:
        P = data.as_distribution()
        Qd = Q.as_dataset().as_distribution()
        cost, _ = ot_distance(Qd, P, TransportCost.feature_label(norm))
        if cost > eps + BUDGET_TOL:
            raise InfeasibleQ(f"Q spends {cost:.6g} > eps = {eps:.6g}")
    wc = worst_case_value(data, norm, eps, theta)
    qv = Q.expected_hinge(theta)
    best, _ = min_empirical_hinge(Q, max_iter=theta_probe_budget)
    support = sol.support if sol is not None else np.array([], dtype=int)
    xi = sol.xi if sol is not None else np.zeros(data.dim)
    q = sol.q if sol is not None else np.array([])
    return NashCertificate(theta, support, xi, q, wc - qv, qv - best, wc, qv, best)


def gaussian_blobs(rng, J: int = 20, scale: float = 0.5) -> LabeledDataset:
    """Two isotropic blobs around (1, -1) (label +1) and (-1, 1) (label -1)."""
    half = J // 2
    pos = rng.normal(loc=(1.0, -1.0), scale=math.sqrt(scale), size=(half, 2))
    neg = rng.normal(loc=(-1.0, 1.0), scale=math.sqrt(scale), size=(J - half, 2))
    return LabeledDataset(np.vstack([pos, neg]), np.r_[np.ones(half), -np.ones(J - half)])
