import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import brute_force_contraction, cos_theta_direct
from qtp.errors import NegativeDensityError, NumericalError, ValidationError
from qtp.hierarchy import (
    DetectorResponse,
    HierarchyTensor,
    cauchy_schwarz_excess,
    jensen_excess,
    kolmogorov_condition_check,
    negativity_witness,
    probabilities_from_tensor,
    q1_discrete,
    q2_average,
    q2_discrete,
    synthetic_classical_hierarchy,
)
from qtp.nonclassicality import kolmogorov_distance

seeds = st.integers(0, 2**32 - 1)


def random_hermitian(rng, d):
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return A + A.conj().T


def test_tensor_validation():
    with pytest.raises(ValidationError):
        HierarchyTensor(np.ones(2), np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValidationError):
        HierarchyTensor(np.ones(3), np.eye(2))
    G = HierarchyTensor(np.array([3.0, 4.0]), np.eye(2))
    assert G.norm(1) == pytest.approx(5.0)
    assert G.norm(2) == pytest.approx(np.sqrt(2))


def test_response_aggregate_is_the_outcome_sum():
    R = DetectorResponse(np.arange(12.0).reshape(4, 3))
    np.testing.assert_array_equal(R.aggregate, [18.0, 22.0, 26.0])
    assert R.outcomes == 4


def test_rank_one_tensor_gives_product_distributions():
    rng = np.random.default_rng(1)
    R = DetectorResponse(rng.random((5, 4)))
    G = HierarchyTensor.rank_one(rng.random(4), R.aggregate)
    p1 = probabilities_from_tensor(G, R, 1)
    np.testing.assert_allclose(probabilities_from_tensor(G, R, 2), np.outer(p1, p1), atol=1e-15)


def test_scalar_index_reduces_to_normalized_weights():
    R = DetectorResponse(np.array([[1.0], [3.0]]))
    np.testing.assert_allclose(probabilities_from_tensor(HierarchyTensor(np.ones(1), np.ones((1, 1))), R, 1),
                               [0.25, 0.75])


@given(seeds, st.integers(1, 6), st.integers(1, 5))
def test_contraction_matches_brute_force(seed, d, z):
    rng = np.random.default_rng(seed)
    M = rng.random((d, d))
    G = HierarchyTensor(rng.random(d), M @ M.T)
    R = DetectorResponse(rng.random((z, d)))
    for n in (1, 2):
        np.testing.assert_allclose(probabilities_from_tensor(G, R, n), brute_force_contraction(
            G.g1 if n == 1 else G.g2, R.vectors, n), rtol=1e-12)


def test_negative_contractions_list_their_outcomes():
    G = HierarchyTensor(np.array([1.0, -2.0]), np.eye(2))
    R = DetectorResponse(np.array([[1.0, 0.0], [0.0, 1.0]]))
    with pytest.raises(NegativeDensityError, match=r"\(1,\)"):
        probabilities_from_tensor(G, R, 1)
    with pytest.raises(ValidationError):
        probabilities_from_tensor(G, R, 3)


def test_kolmogorov_condition_on_parallel_and_symmetric_tensors():
    rng = np.random.default_rng(2)
    R = DetectorResponse(rng.random((3, 4)))
    antisym, cos = kolmogorov_condition_check(HierarchyTensor.rank_one(rng.random(4), R.aggregate), R)
    assert antisym == pytest.approx(0.0, abs=1e-14)
    assert cos == pytest.approx(1.0, abs=1e-14)
    S = rng.random((4, 4))
    antisym, _ = kolmogorov_condition_check(HierarchyTensor(rng.random(4), S + S.T), R)
    assert antisym == pytest.approx(0.0, abs=1e-14)


def test_degenerate_kolmogorov_condition():
    R = DetectorResponse(np.ones((2, 2)))
    with pytest.raises(NumericalError):
        kolmogorov_condition_check(HierarchyTensor(np.zeros(2), np.eye(2)), R)


@given(seeds, st.integers(2, 6))
def test_cos_theta_matches_direct_inner_products(seed, d):
    rng = np.random.default_rng(seed)
    g1 = rng.normal(size=d) + 1j * rng.normal(size=d)
    g2 = random_hermitian(rng, d)
    R = DetectorResponse(rng.random((3, d)))
    _, cos = kolmogorov_condition_check(HierarchyTensor(g1, g2), R)
    assert cos == pytest.approx(cos_theta_direct(g1, g2, R.aggregate), abs=1e-12)


@given(seeds, st.floats(1e-3, 1e3))
def test_cos_theta_is_scale_invariant(seed, c):
    rng = np.random.default_rng(seed)
    g1, g2 = rng.random(4), random_hermitian(rng, 4)
    R = DetectorResponse(rng.random((3, 4)))
    _, cos = kolmogorov_condition_check(HierarchyTensor(g1, g2), R)
    _, cos_scaled = kolmogorov_condition_check(HierarchyTensor(c * g1, c * g2), R)
    assert cos_scaled == pytest.approx(cos, abs=1e-12)


def test_negativity_witness():
    assert negativity_witness(np.eye(3)) == pytest.approx(1.0)
    assert negativity_witness(np.diag([1.0, -0.3])) == pytest.approx(-0.3)


@given(seeds, st.integers(1, 6), st.integers(1, 5))
def test_positive_tensors_respect_cauchy_schwarz(seed, d, z):
    rng = np.random.default_rng(seed)
    M = rng.random((d, d))
    G = HierarchyTensor(rng.random(d), M @ M.T)
    P2 = probabilities_from_tensor(G, DetectorResponse(rng.random((z, d))), 2)
    assert negativity_witness(G.g2) >= -1e-12
    assert np.all(cauchy_schwarz_excess(P2, P2, P2, 1) <= 1e-15)


def test_indefinite_tensor_can_violate_cauchy_schwarz():
    g2 = np.array([[0.1, 1.0], [1.0, 0.1]])
    R = DetectorResponse(np.eye(2))
    P2 = probabilities_from_tensor(HierarchyTensor(np.ones(2), g2), R, 2)
    assert negativity_witness(g2) < 0
    assert q2_discrete(P2, P2, P2, 1) > 0


def test_deterministic_hidden_state_gives_point_masses():
    F = np.array([[0.0, 1.0], [1.0, 0.0]])
    levels = synthetic_classical_hierarchy(np.array([1.0, 0.0]), F, 3)
    assert levels[0].tolist() == [0.0, 1.0]
    assert levels[2][1, 1, 1] == 1.0 and levels[2].sum() == 1.0
    assert q1_discrete(levels[0], levels[1]) == 0.0
    assert q2_discrete(levels[1], levels[1], levels[1], 1) == 0.0


def test_sharp_responses_satisfy_jensen_exhaustively():
    F = np.array([[1.0, 0.0], [0.0, 1.0]])
    p1, p2 = synthetic_classical_hierarchy(np.array([0.5, 0.5]), F, 2)
    for z in range(2):
        assert p2[z, z] >= p1[z] ** 2


def test_hierarchy_input_validation():
    with pytest.raises(ValidationError):
        synthetic_classical_hierarchy(np.array([0.5, 0.6]), np.ones((2, 2)), 2)
    with pytest.raises(ValidationError):
        synthetic_classical_hierarchy(np.array([0.5, 0.5]), -np.ones((2, 2)), 2)
    with pytest.raises(ValidationError):
        q2_average([np.ones(2)], 2)


def test_per_measurement_response_tables():
    rng = np.random.default_rng(3)
    F = rng.random((3, 4, 5))
    F /= F.sum(axis=1, keepdims=True)
    rho = rng.random(5)
    rho /= rho.sum()
    levels = synthetic_classical_hierarchy(rho, F, 3)
    direct = np.einsum("x,ax,bx,cx->abc", rho, F[0], F[1], F[2])
    np.testing.assert_allclose(levels[2], direct, atol=1e-15)


def test_jensen_excess_uses_the_repeated_argument():
    p1 = np.array([0.5, 0.5])
    p2 = np.array([[0.2, 0.3], [0.3, 0.2]])
    np.testing.assert_allclose(jensen_excess(p1, p2), [0.05, 0.05])


@pytest.mark.parametrize("d,states", list(itertools.product([2, 4, 6], [1, 3])))
def test_classical_hierarchies_show_no_violation(d, states):
    rng = np.random.default_rng(d * 10 + states)
    rho = rng.random(states)
    rho /= rho.sum()
    F = rng.random((d, states))
    F /= F.sum(axis=0)
    levels = synthetic_classical_hierarchy(rho, F, 4)
    for n in (2, 3):
        assert q1_discrete(levels[n - 2], levels[n - 1]) < 1e-12
        assert q2_average(levels, n) < 1e-12
    for n in (1, 2):
        for i in range(n + 1):
            assert kolmogorov_distance(levels[n - 1], levels[n], i) < 1e-12
