import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment
from scipy.stats import entropy

from bnu.exceptions import InputError
from bnu.metrics import (
    EvalReport,
    angle_cost_matrix,
    dimensionality_scores,
    evaluate,
    match_endmembers,
    matching_cost,
    mean_angle_abundances,
    mean_angle_endmembers,
    mean_sid,
    rmse_over_runs,
    sid,
)


def test_angles_known_values():
    C = angle_cost_matrix([[1.0, 0.0], [1.0, 1.0]], [[0.0, 2.0], [3.0, 0.0]])
    np.testing.assert_allclose(C, [[90.0, 0.0], [45.0, 45.0]], atol=1e-12)


def test_angle_is_scale_invariant():
    rng = np.random.default_rng(0)
    x = rng.uniform(size=10)
    assert angle_cost_matrix(x, 7.5 * x)[0, 0] == pytest.approx(0.0, abs=1e-6)


def test_zero_vector_angle_is_ninety():
    assert angle_cost_matrix([0.0, 0.0], [1.0, 2.0])[0, 0] == pytest.approx(90.0)


def test_sid_matches_symmetric_kl():
    rng = np.random.default_rng(1)
    p, q = rng.uniform(0.1, 1, 20), rng.uniform(0.1, 1, 20)
    ref = entropy(p, q) + entropy(q, p)
    assert sid(p, q) == pytest.approx(ref, rel=1e-12)
    assert sid(p, q) == pytest.approx(sid(q, p), rel=1e-14)
    assert sid(p, 3 * p) == pytest.approx(0.0, abs=1e-14)


def test_sid_with_exact_zero_is_finite():
    assert np.isfinite(sid([0.0, 1.0], [0.5, 0.5]))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), K=st.integers(1, 6))
def test_matching_recovers_a_permutation(seed, K):
    rng = np.random.default_rng(seed)
    F = rng.uniform(0.05, 1, (K, 15))
    perm = rng.permutation(K)
    pairs = match_endmembers(F[perm], F)
    assert pairs == sorted(((int(np.where(perm == j)[0][0]), j) for j in range(K)), key=lambda p: p[1])
    assert matching_cost(F[perm], F, pairs) == pytest.approx(0.0, abs=1e-5)


@pytest.mark.parametrize("shape", [(5, 5), (7, 4), (3, 6)])
def test_exhaustive_matching_agrees_with_hungarian(shape):
    rng = np.random.default_rng(sum(shape))
    Fe, Ft = rng.uniform(size=(shape[0], 12)), rng.uniform(size=(shape[1], 12))
    pairs = match_endmembers(Fe, Ft)
    r, c = linear_sum_assignment(angle_cost_matrix(Fe, Ft))
    assert len(pairs) == min(shape)
    assert matching_cost(Fe, Ft, pairs) == pytest.approx(angle_cost_matrix(Fe, Ft)[r, c].sum(), rel=1e-12)


def test_large_problem_uses_assignment():
    rng = np.random.default_rng(3)
    F = rng.uniform(size=(12, 30))
    perm = rng.permutation(12)
    pairs = match_endmembers(F[perm], F)
    assert [perm[i] for i, _ in pairs] == list(range(12))


def test_mean_angles_and_sid_on_identity():
    rng = np.random.default_rng(4)
    F = rng.uniform(0.1, 1, (3, 10))
    S = rng.dirichlet(np.ones(3), 50)
    pairs = match_endmembers(F, F)
    assert mean_angle_endmembers(F, F, pairs) == pytest.approx(0.0, abs=1e-5)
    assert mean_angle_abundances(S, S, pairs) == pytest.approx(0.0, abs=1e-5)
    assert mean_sid(F, F, pairs) == pytest.approx(0.0, abs=1e-14)


def test_empty_pairs_rejected():
    with pytest.raises(InputError):
        mean_sid(np.ones((1, 2)), np.ones((1, 2)), [])


def test_rmse_over_runs():
    assert rmse_over_runs([3.0, 4.0]) == pytest.approx(np.sqrt(12.5))
    with pytest.raises(InputError):
        rmse_over_runs([])


def test_dimensionality_scores():
    acc, rmse = dimensionality_scores([3, 3, 4, 2], 3)
    assert acc == 0.5 and rmse == pytest.approx(np.sqrt(0.5))
    with pytest.raises(InputError):
        dimensionality_scores([], 3)


def test_evaluate_with_extra_estimated_endmember():
    rng = np.random.default_rng(5)
    F = rng.uniform(0.1, 1, (3, 10))
    S = rng.dirichlet(np.ones(3), 40)
    F_est = np.vstack([F[[2, 0, 1]], rng.uniform(0.1, 1, 10)])
    S_est = np.hstack([S[:, [2, 0, 1]], np.zeros((40, 1))])
    rep = evaluate(F_est, S_est, F, S)
    assert isinstance(rep, EvalReport)
    assert rep.K_est == 4 and rep.K_true == 3 and rep.accuracy == 0.0
    assert rep.matching == [(1, 0), (2, 1), (0, 2)]
    assert rep.theta_F == pytest.approx(0.0, abs=1e-5)
    d = rep.as_dict()
    assert d["matching"] == [[1, 0], [2, 1], [0, 2]] and d["accuracy"] == 0.0
