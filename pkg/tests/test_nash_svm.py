import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from drokit.core import DiscreteDistribution, LabeledDataset, Norm, TransportCost, ot_distance
from drokit.ctransform import dro_value_via_envelope
from drokit.envelopes import UnivariateLoss
from drokit.errors import InfeasibleQ, InvalidAlpha
from drokit.nash_svm import (
    PerturbedDataset,
    gaussian_blobs,
    min_empirical_hinge,
    nash_family,
    primal_objective,
    single_alpha,
    solve_dual_light,
    solve_primal_svm,
    transport_spend,
    uniform_alpha,
    verify_saddle,
    worst_case_for_theta,
    worst_case_value,
)

norms = st.sampled_from(list(Norm))


def blobs(seed, J=20):
    return gaussian_blobs(np.random.default_rng(seed), J)


def exact_spend(data, Q, norm):
    return ot_distance(Q.as_dataset().as_distribution(), data.as_distribution(),
                       TransportCost.feature_label(norm))[0]


def test_single_sample_example():
    data = LabeledDataset([[1.0, 0.0]], [1.0])
    primal = solve_primal_svm(data, "1", 0.3)
    np.testing.assert_allclose(primal.theta, [1.0, 0.0], atol=1e-6)
    assert primal.value == pytest.approx(0.3, abs=1e-7)
    dual = solve_dual_light(data, "1", 0.3)
    assert dual.q == pytest.approx([0.3])
    assert dual.value == pytest.approx(0.3)


def test_zero_features():
    data = LabeledDataset(np.zeros((4, 2)), [1, -1, 1, -1])
    dual = solve_dual_light(data, "2", 0.1)
    np.testing.assert_array_equal(dual.q, data.weights)
    assert dual.value == pytest.approx(1.0)
    assert solve_primal_svm(data, "2", 0.1).value == pytest.approx(1.0)


@pytest.mark.parametrize("norm", list(Norm))
def test_large_radius_gives_zero_classifier(norm):
    data = blobs(3)
    eps = norm.eval(data.weights @ data.signed_features()) * 1.01
    primal = solve_primal_svm(data, norm, eps)
    assert primal.value == pytest.approx(1.0, abs=1e-7)
    assert np.linalg.norm(primal.theta) <= 1e-6


@pytest.mark.parametrize("norm", list(Norm))
def test_separable_small_radius(norm):
    X = np.array([[2.0, 0.0], [3.0, 1.0], [-2.0, 0.5], [-3.0, -1.0]])
    data = LabeledDataset(X, [1, 1, -1, -1])
    eps = 1e-6
    primal = solve_primal_svm(data, norm, eps)
    # the hard-margin separator theta = (0.5, 0) has zero hinge, so the value is at most eps |theta|_*
    assert primal.value <= eps * norm.dual_eval([0.5, 0.0]) + 1e-9


@settings(max_examples=30)
@given(st.integers(0, 100_000), norms)
def test_strong_duality(seed, norm):
    data = blobs(seed)
    eps = 0.1
    dual = solve_dual_light(data, norm, eps)
    primal = solve_primal_svm(data, norm, eps, dual=dual)
    assert abs(primal.value - dual.value) <= 1e-6
    assert primal.value == pytest.approx(primal_objective(data, norm, eps, primal.theta))
    # light-dual feasibility
    assert norm.eval(dual.xi) <= eps + 1e-9
    assert np.all(dual.q >= 0) and np.all(dual.q <= data.weights)


@settings(max_examples=20)
@given(st.integers(0, 100_000), norms)
def test_dual_matches_scipy_lp(seed, norm):
    if norm is Norm.TWO:
        return
    data = blobs(seed, 10)
    A = data.signed_features().T
    d, J = A.shape
    eps = 0.2
    if norm is Norm.INF:
        ref = linprog(-np.ones(J), A_ub=np.vstack([A, -A]), b_ub=np.full(2 * d, eps),
                      bounds=list(zip(np.zeros(J), data.weights)), method="highs")
    else:
        I = np.eye(d)
        rows = np.vstack([np.hstack([A, -I]), np.hstack([-A, -I]), np.r_[np.zeros(J), np.ones(d)]])
        ref = linprog(-np.r_[np.ones(J), np.zeros(d)], A_ub=rows, b_ub=np.r_[np.zeros(2 * d), eps],
                      bounds=list(zip(np.zeros(J), data.weights)) + [(0, None)] * d, method="highs")
    assert solve_dual_light(data, norm, eps).value == pytest.approx(-ref.fun, abs=1e-9)


@settings(max_examples=10)
@given(st.integers(0, 100_000), norms)
def test_nash_family_properties(seed, norm):
    data = blobs(seed)
    eps = 0.1
    dual = solve_dual_light(data, norm, eps)
    primal = solve_primal_svm(data, norm, eps, dual=dual)
    rng = np.random.default_rng(seed)
    alphas = [uniform_alpha(dual, data.size), single_alpha(dual, data.size, int(dual.support[0]))]
    a = np.zeros(data.size)
    a[dual.support] = rng.dirichlet(np.ones(dual.support.size))
    alphas.append(a)
    values = []
    for alpha in alphas:
        Q = nash_family(data, dual, alpha, norm)
        assert Q.masses.sum() == pytest.approx(1.0)
        np.testing.assert_array_equal(Q.labels, data.labels[Q.sources])
        assert exact_spend(data, Q, norm) <= eps + 1e-9
        cert = verify_saddle(data, norm, eps, primal.theta, Q, sol=dual)
        assert abs(cert.left_residual) <= 1e-5 and abs(cert.right_residual) <= 1e-5
        values.append(Q.expected_hinge(primal.theta))
    assert max(values) - min(values) <= 1e-7


def test_single_alpha_moves_one_atom():
    data = blobs(11)
    dual = solve_dual_light(data, "2", 0.1)
    j = int(dual.support[0])
    Q = nash_family(data, dual, single_alpha(dual, data.size, j), "2")
    moved = np.linalg.norm(Q.features - data.features[Q.sources], axis=1) > 0
    assert moved.sum() == 1
    k = int(np.flatnonzero(moved)[0])
    assert Q.sources[k] == j
    assert Q.masses[k] * np.linalg.norm(Q.features[k] - data.features[j]) == pytest.approx(
        np.linalg.norm(dual.xi))


def test_invalid_alpha():
    data = blobs(2)
    dual = solve_dual_light(data, "2", 0.1)
    with pytest.raises(InvalidAlpha):
        nash_family(data, dual, np.full(data.size, 0.5), "2")
    if dual.zero.size:
        with pytest.raises(InvalidAlpha):
            nash_family(data, dual, single_alpha(dual, data.size, int(dual.zero[0])), "2")


def test_infeasible_q():
    data = blobs(4)
    far = PerturbedDataset(np.arange(data.size), data.weights.copy(), data.features + 10.0, data.labels.copy())
    with pytest.raises(InfeasibleQ):
        verify_saddle(data, "2", 0.1, np.ones(2), far)


@settings(max_examples=25)
@given(st.integers(0, 100_000), norms, st.floats(1e-3, 1.0))
def test_worst_case_matches_lambda_dual(seed, norm, eps):
    rng = np.random.default_rng(seed)
    data = LabeledDataset(rng.normal(size=(10, 3)), rng.choice([-1.0, 1.0], 10))
    theta = rng.normal(size=3)
    Q = worst_case_for_theta(data, norm, eps, theta)
    assert exact_spend(data, Q, norm) <= eps + 1e-9
    signed = DiscreteDistribution(data.signed_features(), data.weights)
    oracle = dro_value_via_envelope(UnivariateLoss.hinge(), norm, 1, theta, signed, eps).value
    assert worst_case_value(data, norm, eps, theta) == pytest.approx(oracle, abs=1e-7)
    assert Q.expected_hinge(theta) == pytest.approx(oracle, abs=1e-7)


def test_worst_case_trivial_cases():
    data = blobs(5)
    Q = worst_case_for_theta(data, "2", 0.3, np.zeros(2))
    np.testing.assert_array_equal(Q.features, data.features)
    assert Q.expected_hinge(np.zeros(2)) == pytest.approx(1.0)
    theta = np.array([0.7, -0.2])
    Q = worst_case_for_theta(data, "2", 1e-12, theta)
    assert Q.expected_hinge(theta) == pytest.approx(float(data.weights @ np.maximum(
        0, 1 - data.labels * (data.features @ theta))), abs=1e-10)


def test_worst_case_is_not_always_nash():
    """A best response for nature need not be a least favorable distribution."""
    worst = 0.0
    for seed in range(10):
        data = blobs(seed)
        dual = solve_dual_light(data, "1", 0.1)
        primal = solve_primal_svm(data, "1", 0.1, dual=dual)
        Q = worst_case_for_theta(data, "1", 0.1, primal.theta)
        cert = verify_saddle(data, "1", 0.1, primal.theta, Q)
        assert abs(cert.left_residual) <= 1e-6
        assert cert.right_residual >= -1e-9
        worst = max(worst, cert.right_residual)
    assert worst > 1e-3


def test_symmetric_data_zero_theta():
    data = LabeledDataset([[1.0, 0.0], [1.0, 0.0]], [1, -1])
    Q = PerturbedDataset(np.arange(2), data.weights.copy(), data.features.copy(), data.labels.copy())
    cert = verify_saddle(data, "2", 100.0, np.zeros(2), Q)
    assert cert.right_residual == pytest.approx(0.0, abs=1e-12)
    assert min_empirical_hinge(Q)[0] == pytest.approx(1.0)


@pytest.mark.parametrize("norm", list(Norm))
def test_value_monotone_in_radius(norm):
    data = blobs(8)
    vals = [solve_dual_light(data, norm, e).value for e in (0.01, 0.05, 0.1, 0.5, 1.0)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_transport_spend_of_nash_is_norm_of_xi():
    data = blobs(9)
    dual = solve_dual_light(data, "inf", 0.2)
    Q = nash_family(data, dual, uniform_alpha(dual, data.size), "inf")
    assert transport_spend(data, Q, "inf") == pytest.approx(Q.spend)
