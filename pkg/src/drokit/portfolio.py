"""Distributionally robust log-optimal portfolios under the log-return transport cost."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, InfiniteRegion, NoConvergence
from .solvers import graal, project_simplex, projected_gradient

INF = math.inf
ZERO_TOL = 1e-12
LAMBDA_SLACK = 1e-9


def h(s):
    """Conjugate of |log z| at z = 1: -1 - log(-s) for s < -1, s on [-1, 0], +inf for s > 0."""
    s = np.asarray(s, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(s < -1, -1.0 - np.log(np.where(s < -1, -s, 1.0)), s)
    return np.where(s > 0, INF, out)


def h_prime(s):
    s = np.asarray(s, float)
    with np.errstate(divide="ignore"):
        return np.where(s < -1, -1.0 / np.where(s < -1, s, -1.0), 1.0)


def support_size(theta) -> int:
    return int(np.count_nonzero(np.asarray(theta) > ZERO_TOL))


@dataclass(frozen=True, eq=False)
class PortfolioCTransform:
    value: float
    gamma_star: Optional[float] = None
    active: Optional[np.ndarray] = None
    k: Optional[int] = None
    perm: Optional[np.ndarray] = None


def _check_samples(Z):
    if np.any(Z <= 0):
        raise DomainError("return samples must be strictly positive")


def _batch(theta, lam, Z):
    """Sorting rule for every row of Z; returns gamma, k, perm (rows), or None when +inf."""
    theta = np.asarray(theta, float)
    Z = np.atleast_2d(np.asarray(Z, float))
    _check_samples(Z)
    n0 = support_size(theta)
    if n0 == 0 or lam < 1.0 / n0:
        return None
    d = theta.size
    U = theta[None, :] * Z
    perm = np.argsort(U, axis=1, kind="stable")
    Us = np.take_along_axis(U, perm, axis=1)
    S = np.cumsum(Us, axis=1)
    i = np.arange(1, d + 1)
    cond = (1.0 - (d - i) * lam) * Us <= lam * S
    k = d - np.argmax(cond[:, ::-1], axis=1)
    Sk = S[np.arange(Z.shape[0]), k - 1]
    gamma = ((d - k) * lam - 1.0) / Sk
    return gamma, k, perm, U


def portfolio_ctransform(theta, lam: float, zhat) -> PortfolioCTransform:
    """Closed-form c-transform of -log<theta, z> for one sample."""
    out = _batch(theta, lam, np.atleast_2d(zhat))
    if out is None:
        return PortfolioCTransform(INF)
    gamma, k, perm, U = out
    g = float(gamma[0])
    value = 1.0 + math.log(-g) + float(np.sum(lam * h(g * U[0] / lam)))
    kk = int(k[0])
    return PortfolioCTransform(value, g, np.sort(perm[0, :kk]), kk, perm[0])


def ctransform_values(theta, lam: float, Z) -> np.ndarray:
    out = _batch(theta, lam, Z)
    if out is None:
        return np.full(np.atleast_2d(Z).shape[0], INF)
    gamma, _, _, U = out
    return 1.0 + np.log(-gamma) + lam * h(gamma[:, None] * U / lam).sum(axis=1)


def ctransform_numeric(theta, lam: float, zhat, grid: int = 4000) -> float:
    """1-D oracle: grid over gamma in [-1e4, -1e-6] (log spaced) with golden refinement."""
    from .solvers import golden_section_max

    theta = np.asarray(theta, float)
    zhat = np.asarray(zhat, float)
    u = theta * zhat

    def obj(g):
        return 1.0 + math.log(-g) + float(np.sum(lam * h(g * u / lam)))

    gs = -np.logspace(-6, 4, grid)
    vals = np.array([obj(g) for g in gs])
    j = int(np.argmax(vals))
    lo, hi = sorted((gs[max(j - 1, 0)], gs[min(j + 1, grid - 1)]))
    _, v = golden_section_max(obj, (lo, hi), tol=1e-14)
    return max(v, float(vals[j]))


def portfolio_gradients(theta, lam: float, zhat, eps: float = 0.0):
    """(grad_theta, grad_lam) of lam eps + l_c(theta, lam, zhat)."""
    out = _batch(theta, lam, np.atleast_2d(zhat))
    if out is None:
        raise InfiniteRegion("lam below 1/|theta|_0: the c-transform is +inf")
    gamma, _, _, U = out
    g = float(gamma[0])
    z = np.asarray(zhat, float)
    s = g * U[0] / lam
    hp = h_prime(s)
    grad_theta = g * z * hp
    grad_lam = eps + float(np.sum(h(s))) - float(np.sum(g * U[0] * hp)) / lam
    return grad_theta, grad_lam


def _batch_gradients(theta, lam, Z, w):
    out = _batch(theta, lam, Z)
    if out is None:
        raise InfiniteRegion("lam below 1/|theta|_0")
    gamma, _, _, U = out
    S = gamma[:, None] * U / lam
    hp = h_prime(S)
    gtheta = (w * gamma) @ (Z * hp)
    glam = float(w @ (h(S).sum(axis=1) - (gamma[:, None] * U * hp).sum(axis=1) / lam))
    return gtheta, glam


@dataclass(frozen=True, eq=False)
class PortfolioProblem:
    samples: np.ndarray
    eps: float
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        Z = np.atleast_2d(np.asarray(self.samples, float))
        _check_samples(Z)
        w = np.full(Z.shape[0], 1.0 / Z.shape[0]) if self.weights is None else np.asarray(self.weights, float)
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        object.__setattr__(self, "samples", Z)
        object.__setattr__(self, "weights", w)

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    def objective(self, theta, lam) -> float:
        vals = ctransform_values(theta, lam, self.samples)
        return lam * self.eps + float(self.weights @ vals)

    def nominal(self, theta) -> float:
        return float(-self.weights @ np.log(self.samples @ np.asarray(theta, float)))


@dataclass(frozen=True, eq=False)
class DroSolution:
    theta: np.ndarray
    lam: float
    value: float
    iterations: int
    trace: list = field(default_factory=list)
    solver: str = "graal"


def _project(x, d):
    theta = project_simplex(x[:d])
    lam = max(float(x[d]), 1.0 / support_size(theta) + LAMBDA_SLACK)
    return np.concatenate([theta, [lam]])


def solve_saa(problem: PortfolioProblem, tol: float = 1e-12, max_iter: int = 50_000,
              x0=None) -> DroSolution:
    """Empirical log-optimal portfolio by projected gradient."""
    Z, w = problem.samples, problem.weights
    d = problem.d

    def f(t):
        r = Z @ t
        return INF if np.any(r <= 0) else float(-w @ np.log(r))

    def g(t):
        return -(w / (Z @ t)) @ Z

    start = np.full(d, 1.0 / d) if x0 is None else np.asarray(x0, float)
    res = projected_gradient(f, g, start, project_simplex, max_iter=max_iter, tol=tol)
    if res.status != "optimal":
        raise NoConvergence("SAA projected gradient did not settle")
    return DroSolution(res.x, math.nan, res.value, res.iterations, res.trace, "saa")


def solve_portfolio(problem: PortfolioProblem, solver: str = "graal", tol: float = 1e-12,
                    max_iter: int = 50_000, x0=None, lam0: float = 1.0) -> DroSolution:
    """min over theta in the simplex and lam >= 1/|theta|_0 of lam eps + E l_c(theta, lam, Z).

    eps = 0 is the sample average approximation and is routed to ``solve_saa``.
    """
    if problem.eps == 0:
        return solve_saa(problem, tol=tol, max_iter=max_iter, x0=x0)
    d = problem.d
    Z, w, eps = problem.samples, problem.weights, problem.eps

    def f(x):
        return problem.objective(x[:d], x[d])

    def g(x):
        gt, gl = _batch_gradients(x[:d], x[d], Z, w)
        return np.concatenate([gt, [eps + gl]])

    theta0 = np.full(d, 1.0 / d) if x0 is None else np.asarray(x0, float)
    start = _project(np.concatenate([theta0, [lam0]]), d)
    proj = lambda x: _project(x, d)
    if solver == "graal":
        res = graal(f, g, start, proj, max_iter=max_iter, tol=tol)
    elif solver in ("pg", "projected_gradient"):
        res = projected_gradient(f, g, start, proj, max_iter=max_iter, tol=tol)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    if res.status != "optimal":
        raise NoConvergence(f"{solver} did not settle within {max_iter} iterations")
    x = res.x
    return DroSolution(x[:d], float(x[d]), res.value, res.iterations, res.trace, solver)


# --- experiment harness


@dataclass
class PortfolioExperimentConfig:
    d: int = 10
    n_train: int = 100
    n_test: int = 100_000
    n_trials: int = 50
    eps_grid: Sequence[float] = (0.0, 1e-3, 1e-2, 5e-2, 1e-1, 2e-1, 5e-1, 1.0, 2.0, 5.0)
    seed: int = 0
    mean: Optional[Sequence[float]] = None
    cov: Optional[Sequence[Sequence[float]]] = None
    solver: str = "graal"
    tol: float = 1e-10
    max_iter: int = 50_000
    jobs: int = 1

    def log_mean(self) -> np.ndarray:
        if self.mean is not None:
            return np.asarray(self.mean, float)
        return np.linspace(0.0, 0.1, self.d)

    def log_cov(self) -> np.ndarray:
        if self.cov is not None:
            return np.asarray(self.cov, float)
        return 0.5 * np.eye(self.d)


CSV_COLUMNS = ("trial", "eps", "oos_loss", "mean_return", "sharpe")


def sample_returns(rng, mean, cov, n) -> np.ndarray:
    """Gross returns exp(N(mean, cov))."""
    return np.exp(rng.multivariate_normal(mean, cov, size=n, method="cholesky"))


def evaluate(theta, Z_test) -> tuple:
    r = Z_test @ theta
    excess = r - 1.0
    sd = float(excess.std())
    return float(-np.log(r).mean()), float(excess.mean()), float(excess.mean() / sd) if sd > 0 else math.nan


def run_trial(cfg: PortfolioExperimentConfig, trial: int) -> list:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, trial]))
    mean, cov = cfg.log_mean(), cfg.log_cov()
    Z = sample_returns(rng, mean, cov, cfg.n_train)
    Z_test = sample_returns(rng, mean, cov, cfg.n_test)
    rows = []
    theta, lam = None, 1.0
    for eps in sorted(cfg.eps_grid):
        sol = solve_portfolio(PortfolioProblem(Z, eps), cfg.solver, cfg.tol, cfg.max_iter, x0=theta, lam0=lam)
        if eps > 0:
            theta, lam = sol.theta, sol.lam
        elif theta is None:
            theta = sol.theta
        rows.append((trial, float(eps)) + evaluate(sol.theta, Z_test))
    return rows


def run_portfolio_experiment(cfg: PortfolioExperimentConfig) -> list:
    """One row (trial, eps, out-of-sample loss, mean return, Sharpe ratio) per trial and eps."""
    trials = range(cfg.n_trials)
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            chunks = list(pool.map(run_trial, [cfg] * cfg.n_trials, trials))
    else:
        chunks = [run_trial(cfg, t) for t in trials]
    return [row for chunk in chunks for row in chunk]


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for trial, eps, loss, ret, sharpe in rows:
        writer.writerow([trial] + [format(v, ".17g") for v in (eps, loss, ret, sharpe)])
    return buf.getvalue()


def summarize(rows) -> dict:
    """Per-eps mean out-of-sample loss plus the paired standard error against eps = 0."""
    arr = np.array([(r[0], r[1], r[2]) for r in rows])
    eps_values = np.unique(arr[:, 1])
    trials = np.unique(arr[:, 0])
    table = {e: np.array([arr[(arr[:, 0] == t) & (arr[:, 1] == e), 2][0] for t in trials]) for e in eps_values}
    base = table.get(0.0)
    out = {}
    for e, losses in table.items():
        diff = losses - base if base is not None else np.full_like(losses, math.nan)
        se = float(diff.std(ddof=1) / math.sqrt(len(diff))) if len(diff) > 1 else math.nan
        out[float(e)] = {"mean": float(losses.mean()), "diff_mean": float(diff.mean()), "diff_se": se}
    return out
