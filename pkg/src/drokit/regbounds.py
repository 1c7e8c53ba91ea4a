"""Variation and Lipschitz regularization bounds on the worst-case expected loss."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Norm
from .envelopes import UnivariateLoss
from .errors import MissingDerivative

VARIANTS = ("variation", "lipschitz", "wasserstein_variation", "wasserstein_lipschitz")


@dataclass(frozen=True, eq=False)
class DerivativeProfile:
    """Per-sample data for the bounds.

    ``tensor_norms[j, k-1]`` is |D^k l(z_j)| for k = 1..K, ``lipschitz[k]``
    is lip(D^{k-1} l), i.e. sup_z |D^k l(z)|, and ``losses[j]`` is l(z_j).
    """
    losses: np.ndarray
    tensor_norms: np.ndarray
    lipschitz: dict = field(default_factory=dict)

    def __post_init__(self):
        losses = np.asarray(self.losses, float).ravel()
        tn = np.asarray(self.tensor_norms, float)
        if tn.ndim == 1:
            tn = tn.reshape(losses.size, -1) if tn.size else np.zeros((losses.size, 0))
        if tn.shape[0] != losses.size:
            raise ValueError("tensor_norms needs one row per sample")
        if np.any(tn < 0) or any(v < 0 for v in self.lipschitz.values()):
            raise ValueError("norms and Lipschitz moduli must be nonnegative")
        object.__setattr__(self, "losses", losses)
        object.__setattr__(self, "tensor_norms", tn)
        object.__setattr__(self, "lipschitz", {int(k): float(v) for k, v in self.lipschitz.items()})

    def norms(self, k: int) -> np.ndarray:
        if k < 1 or k > self.tensor_norms.shape[1]:
            raise MissingDerivative(f"no tensor norms of order {k}")
        return self.tensor_norms[:, k - 1]

    def lip(self, k: int) -> float:
        """lip(D^{k-1} l)."""
        if k not in self.lipschitz:
            raise MissingDerivative(f"no Lipschitz modulus of D^{k - 1} l")
        return self.lipschitz[k]


@dataclass(frozen=True)
class RegBoundReport:
    nominal: float
    terms: tuple
    total: float
    variant: str


def _weights(weights, n):
    w = np.asarray(weights, float).ravel()
    if w.size != n:
        raise ValueError("weights and profile differ in length")
    return w


def _lq_mean(w, x, q):
    if math.isinf(q):
        return float(np.max(x, initial=0.0))
    return float(w @ x ** q) ** (1.0 / q)


def _report(profile, w, terms, variant):
    nominal = float(w @ profile.losses)
    terms = tuple(float(t) for t in terms)
    return RegBoundReport(nominal, terms, nominal + sum(terms), variant)


def _mul(a, b):
    # 0 * inf counts as 0: a vanishing radius or derivative switches the term off
    return 0.0 if a == 0 or b == 0 else a * b


def variation_bound(profile: DerivativeProfile, weights, p: int, eps: float) -> RegBoundReport:
    """Bound for an OT ball of budget eps whose cost dominates |z - zhat|^p."""
    w = _weights(weights, profile.losses.size)
    terms = []
    for k in range(1, p):
        q = p / (p - k)
        terms.append(_mul(eps ** (k / p) / math.factorial(k), _lq_mean(w, profile.norms(k), q)))
    terms.append(_mul(eps / math.factorial(p), profile.lip(p)))
    return _report(profile, w, terms, "variation")


def lipschitz_bound(profile: DerivativeProfile, weights, p: int, eps: float) -> RegBoundReport:
    """Variation bound with every tensor norm replaced by its global supremum."""
    w = _weights(weights, profile.losses.size)
    terms = [_mul(eps ** (k / p) / math.factorial(k), profile.lip(k)) for k in range(1, p + 1)]
    return _report(profile, w, terms, "lipschitz")


def wasserstein_bound(profile: DerivativeProfile, weights, p: int, eps: float,
                      variant: str = "variation") -> RegBoundReport:
    """Bounds for the p-Wasserstein ball of radius eps (OT budget eps^p)."""
    w = _weights(weights, profile.losses.size)
    if variant == "variation":
        terms = []
        for k in range(1, p):
            q = p / (p - k)
            terms.append(_mul(eps ** k / math.factorial(k), _lq_mean(w, profile.norms(k), q)))
        terms.append(_mul(eps ** p / math.factorial(p), profile.lip(p)))
        return _report(profile, w, terms, "wasserstein_variation")
    if variant == "lipschitz":
        terms = [_mul(eps ** k / math.factorial(k), profile.lip(k)) for k in range(1, p + 1)]
        return _report(profile, w, terms, "wasserstein_lipschitz")
    raise ValueError(f"unknown variant {variant!r}")


# --- profile builders

_DERIVATIVE_SUP = {
    "quadratic": {1: math.inf, 2: 2.0},
    "hinge": {1: 1.0},
    "logistic": {1: 1.0, 2: 0.25, 3: 1.0 / (6.0 * math.sqrt(3.0))},
    "zero_one": {},
    "neg_log": {},
}


def derivative_sup(L: UnivariateLoss, k: int) -> float:
    """sup_s |L^{(k)}(s)| for the built-in losses."""
    table = _DERIVATIVE_SUP.get(L.kind)
    if table is None:
        if k == 1 and L.lipschitz is not None:
            return float(L.lipschitz)
        if k == 2 and L.smoothness is not None:
            return float(L.smoothness)
        raise MissingDerivative(f"no bound on derivative {k} of {L.kind}")
    if L.kind == "quadratic" and k >= 3:
        return 0.0
    if k not in table:
        if L.kind == "neg_log":
            return math.inf
        raise MissingDerivative(f"no bound on derivative {k} of {L.kind}")
    return table[k]


def linear_model_profile(L: UnivariateLoss, theta, norm, atoms, p: int) -> DerivativeProfile:
    """Profile of l(z) = L(<theta, z>), using |D^k l(z)| = |L^{(k)}(<theta, z>)| |theta|_*^k."""
    theta = np.asarray(theta, float)
    atoms = np.atleast_2d(np.asarray(atoms, float))
    n = Norm.parse(norm).dual_eval(theta)
    s = atoms @ theta
    orders = p - 1
    tn = np.zeros((s.size, orders))
    if orders:
        for j, sj in enumerate(s):
            ds = L.derivatives(float(sj), orders)
            if ds is None:
                raise MissingDerivative(f"derivatives of {L.kind} up to order {orders} unavailable")
            tn[j] = np.abs(ds) * n ** np.arange(1, orders + 1)
    lips = {}
    for k in range(1, p + 1):
        try:
            lips[k] = _mul(derivative_sup(L, k), n ** k)
        except MissingDerivative:
            pass
    return DerivativeProfile(np.asarray(L(s), float), tn, lips)


def hessian_norm(H, norm) -> float:
    """sup |H[u, v]| over unit vectors u, v (exact for 1 and 2, an upper bound for inf)."""
    norm = Norm.parse(norm)
    H = np.asarray(H, float)
    H = (H + H.T) / 2
    if norm is Norm.TWO:
        return float(np.max(np.abs(np.linalg.eigvalsh(H))))
    if norm is Norm.ONE:
        return float(np.max(np.abs(H)))
    return float(np.abs(H).sum())


def finite_difference_profile(loss, atoms, norm, p: int, lipschitz: dict | None = None,
                              higher=None) -> DerivativeProfile:
    """Central-difference profile of a black-box loss; orders >= 3 must be supplied via ``higher``."""
    norm = Norm.parse(norm)
    atoms = np.atleast_2d(np.asarray(atoms, float))
    J, d = atoms.shape
    orders = p - 1
    tn = np.zeros((J, orders))
    if orders >= 3:
        if higher is None:
            raise MissingDerivative("tensor norms of order >= 3 must be supplied")
        tn[:, 2:] = np.asarray(higher, float).reshape(J, orders - 2)
    eye = np.eye(d)
    losses = np.array([float(loss(z)) for z in atoms])
    for j, z in enumerate(atoms):
        h = 1e-5 * (1.0 + norm.eval(z))
        if orders >= 1:
            g = np.array([(loss(z + h * e) - loss(z - h * e)) / (2 * h) for e in eye])
            tn[j, 0] = norm.dual_eval(g)
        if orders >= 2:
            hh = 1e-3 * (1.0 + norm.eval(z))
            H = np.empty((d, d))
            for a in range(d):
                for b in range(d):
                    ea, eb = hh * eye[a], hh * eye[b]
                    H[a, b] = (loss(z + ea + eb) - loss(z + ea - eb) - loss(z - ea + eb)
                               + loss(z - ea - eb)) / (4 * hh * hh)
            tn[j, 1] = hessian_norm(H, norm)
    return DerivativeProfile(losses, tn, dict(lipschitz or {}))
