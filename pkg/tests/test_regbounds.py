import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drokit.core import DiscreteDistribution, Norm
from drokit.ctransform import dro_value_via_envelope
from drokit.envelopes import UnivariateLoss
from drokit.errors import MissingDerivative
from drokit.regbounds import (
    DerivativeProfile,
    derivative_sup,
    finite_difference_profile,
    hessian_norm,
    linear_model_profile,
    lipschitz_bound,
    variation_bound,
    wasserstein_bound,
)

norms = st.sampled_from(list(Norm))


def concave_profile():
    """l(z) = -z^2/2 at a single atom z = 0."""
    return DerivativeProfile([0.0], [[0.0, 1.0]], {3: 0.0})


@pytest.mark.parametrize("eps", [1e-3, 0.1, 0.5, 2.0])
def test_concave_example_gap(eps):
    rep = wasserstein_bound(concave_profile(), [1.0], 3, eps, "variation")
    assert rep.total == pytest.approx(eps ** 2 / 2, rel=1e-15)
    # the loss is nonpositive and zero only at the atom, so the exact worst case is 0
    z = np.linspace(-10, 10, 10_001)
    assert np.max(-z ** 2 / 2) == 0.0
    plain = variation_bound(concave_profile(), [1.0], 3, eps)
    assert plain.terms == (0.0, pytest.approx(eps ** (2 / 3) / 2), 0.0)


def test_zero_profile_and_zero_radius():
    prof = DerivativeProfile([0.3, 0.7], np.zeros((2, 2)), {3: 0.0})
    for rep in (variation_bound(prof, [0.5, 0.5], 3, 1.0),
                wasserstein_bound(prof, [0.5, 0.5], 3, 1.0)):
        assert rep.total == pytest.approx(0.5)
    prof = DerivativeProfile([1.0], [[2.0]], {1: 3.0, 2: math.inf})
    assert wasserstein_bound(prof, [1.0], 2, 0.0).total == 1.0
    assert lipschitz_bound(prof, [1.0], 2, 0.0).total == 1.0


def test_report_total_is_sum():
    prof = DerivativeProfile([1.0, 2.0], [[0.5, 1.0], [1.5, 0.2]], {1: 2.0, 2: 3.0, 3: 0.7})
    rep = variation_bound(prof, [0.25, 0.75], 3, 0.3)
    assert rep.total == pytest.approx(rep.nominal + sum(rep.terms))
    assert rep.nominal == pytest.approx(1.75)


def test_linear_loss_p1():
    a = np.array([1.0, -2.0])
    L = UnivariateLoss.smooth_custom(lambda s: np.asarray(s, float), lambda s: np.ones_like(s),
                                     smoothness=0.0, lipschitz=1.0)
    atoms = np.array([[0.5, 0.5], [1.0, -1.0]])
    prof = linear_model_profile(L, a, "inf", atoms, 1)
    rep = variation_bound(prof, [0.5, 0.5], 1, 0.2)
    # sup over the ball of E <a, z> is E <a, zhat> + eps |a|_1
    assert rep.total == pytest.approx(0.5 * (atoms @ a).sum() + 0.2 * 3.0)


def test_missing_derivative():
    prof = DerivativeProfile([0.0], [[1.0]], {})
    with pytest.raises(MissingDerivative):
        variation_bound(prof, [1.0], 2, 0.1)
    with pytest.raises(MissingDerivative):
        variation_bound(prof, [1.0], 3, 0.1)
    with pytest.raises(MissingDerivative):
        derivative_sup(UnivariateLoss.zero_one(), 1)
    with pytest.raises(MissingDerivative):
        finite_difference_profile(lambda z: 0.0, [[0.0]], "2", 4)
    with pytest.raises(ValueError):
        DerivativeProfile([0.0], [[-1.0]])


@given(st.integers(0, 10_000), norms, st.floats(1e-3, 2.0))
def test_quadratic_bound_is_tight(seed, norm, eps):
    rng = np.random.default_rng(seed)
    atoms = rng.normal(size=(3, 2))
    w = rng.dirichlet(np.ones(3))
    theta = rng.normal(size=2)
    L = UnivariateLoss.quadratic()
    prof = linear_model_profile(L, theta, norm, atoms, 2)
    exact = dro_value_via_envelope(L, norm, 2, theta, DiscreteDistribution(atoms, w), eps).value
    rep = variation_bound(prof, w, 2, eps)
    assert rep.total >= exact - 1e-9
    assert rep.total == pytest.approx(exact, rel=1e-8)


@settings(max_examples=30)
@given(st.integers(0, 10_000), norms, st.floats(1e-3, 1.0))
def test_soundness_and_dominance_logistic(seed, norm, eps):
    rng = np.random.default_rng(seed)
    atoms = rng.normal(size=(3, 2))
    w = rng.dirichlet(np.ones(3))
    theta = rng.normal(size=2)
    L = UnivariateLoss.logistic()
    P = DiscreteDistribution(atoms, w)
    for p in (1, 2):
        prof = linear_model_profile(L, theta, norm, atoms, p)
        exact = dro_value_via_envelope(L, norm, p, theta, P, eps).value
        var = variation_bound(prof, w, p, eps)
        lip = lipschitz_bound(prof, w, p, eps)
        assert var.total >= exact - 1e-9
        assert lip.total >= var.total - 1e-12
        wexact = dro_value_via_envelope(L, norm, p, theta, P, eps ** p).value
        wv = wasserstein_bound(prof, w, p, eps, "variation")
        wl = wasserstein_bound(prof, w, p, eps, "lipschitz")
        assert wv.total >= wexact - 1e-9
        assert wl.total >= wv.total - 1e-12


@pytest.mark.parametrize("norm", list(Norm))
def test_first_order_tightness(norm):
    rng = np.random.default_rng(7)
    atoms = rng.normal(size=(4, 3))
    w = np.full(4, 0.25)
    theta = rng.normal(size=3)
    L = UnivariateLoss.logistic()
    prof = linear_model_profile(L, theta, norm, atoms, 2)
    P = DiscreteDistribution(atoms, w)
    ratios = []
    for eps in (1e-2, 1e-3, 1e-4):
        exact = dro_value_via_envelope(L, norm, 2, theta, P, eps ** 2).value
        ratios.append((wasserstein_bound(prof, w, 2, eps).total - exact) / eps)
    assert ratios[-1] <= 0.05
    assert all(b <= a + 1e-9 for a, b in zip(ratios, ratios[1:]))
    # the gap is second order, so the ratio shrinks about linearly in eps
    assert ratios[-1] < ratios[0] / 10


def test_hessian_norm():
    H = np.array([[2.0, -1.0], [-1.0, 3.0]])
    assert hessian_norm(H, "2") == pytest.approx(max(abs(np.linalg.eigvalsh(H))))
    assert hessian_norm(H, "1") == 3.0
    # inf-norm: sup over the cube vertices is exact here; the library reports a bound
    cube = max(abs(np.array(u) @ H @ np.array(v)) for u in [(1, 1), (1, -1), (-1, 1), (-1, -1)]
               for v in [(1, 1), (1, -1), (-1, 1), (-1, -1)])
    assert hessian_norm(H, "inf") >= cube


@given(st.integers(0, 10_000), norms)
def test_finite_difference_matches_analytic(seed, norm):
    rng = np.random.default_rng(seed)
    atoms = rng.normal(size=(3, 2))
    theta = rng.normal(size=2)
    L = UnivariateLoss.logistic()
    analytic = linear_model_profile(L, theta, norm, atoms, 3)
    fd = finite_difference_profile(lambda z: float(L(theta @ z)), atoms, norm, 3, analytic.lipschitz)
    np.testing.assert_allclose(fd.losses, analytic.losses)
    np.testing.assert_allclose(fd.tensor_norms[:, 0], analytic.tensor_norms[:, 0], rtol=1e-6, atol=1e-9)
    if norm is not Norm.INF:
        # rank-one Hessians: the 1- and 2-norm formulas are exact
        np.testing.assert_allclose(fd.tensor_norms[:, 1], analytic.tensor_norms[:, 1], rtol=1e-4, atol=1e-7)
    else:
        assert np.all(fd.tensor_norms[:, 1] >= analytic.tensor_norms[:, 1] * (1 - 1e-4) - 1e-7)


def test_derivative_sups():
    assert derivative_sup(UnivariateLoss.logistic(), 3) == pytest.approx(1 / (6 * math.sqrt(3)))
    s = np.linspace(-10, 10, 200_001)
    sig = 1 / (1 + np.exp(-s))
    assert np.max(np.abs(sig * (1 - sig) * (1 - 2 * sig))) == pytest.approx(1 / (6 * math.sqrt(3)), rel=1e-6)
    assert derivative_sup(UnivariateLoss.quadratic(), 1) == math.inf
    assert derivative_sup(UnivariateLoss.quadratic(), 3) == 0.0
