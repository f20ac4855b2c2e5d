import math
from itertools import combinations_with_replacement, product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import betaln, gammaln

from bnu.ibp import (
    IbpParams,
    harmonic_rate,
    history_log_factorial,
    log_accept_beta_a,
    log_prob_activations,
    mh_step_beta_a,
    new_feature_rate,
    prior_chain_mean_k,
    prior_gibbs_sweep,
    prior_prob_entry_active,
    sample_alpha_a,
    sample_new_feature_count,
)
from bnu.kernels import rng_stream

P11 = IbpParams(alpha_a=1.0, beta_a=1.0)


def test_empty_matrix_log_prob():
    A = np.zeros((0, 3), dtype=np.int8)
    assert log_prob_activations(A, P11) == pytest.approx(-(1 + 1 / 2 + 1 / 3), abs=1e-12)


def test_single_row_log_prob():
    A = np.array([[1, 0, 0]])
    assert log_prob_activations(A, P11) == pytest.approx(-11 / 6 + math.log(1 / 3), abs=1e-12)


def test_zero_rows_are_ignored():
    A = np.array([[1, 0, 0], [0, 0, 0]])
    assert log_prob_activations(A, P11) == pytest.approx(log_prob_activations(A[:1], P11), abs=1e-14)


def test_duplicate_rows_cost_log_two():
    p = IbpParams(alpha_a=0.7, beta_a=2.0)
    dup = np.array([[1, 0, 1], [1, 0, 1]])
    distinct = np.array([[1, 0, 1], [0, 1, 1]])
    assert log_prob_activations(dup, p) - log_prob_activations(distinct, p) == pytest.approx(-math.log(2), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_log_prob_row_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    A = rng.integers(0, 2, size=(5, 6))
    p = IbpParams(alpha_a=rng.uniform(0.1, 3), beta_a=rng.uniform(0.1, 3))
    assert log_prob_activations(A[rng.permutation(5)], p) == pytest.approx(log_prob_activations(A, p), abs=1e-12)


def test_history_term_counts_patterns():
    A = np.array([[1, 1], [1, 1], [1, 1], [0, 1], [0, 1]])
    assert history_log_factorial(A) == pytest.approx(math.log(6) + math.log(2))


def _finite_class_log_prob(rows, D, p, k_star):
    # finite model: K* rows, pi_k ~ Beta(ab/K*, b), entries Bernoulli(pi_k);
    # marginal probability of a row with m ones is B(m + ab/K*, D - m + b) / B(ab/K*, b)
    r = p.alpha_a * p.beta_a / k_star

    def row_lp(m):
        return betaln(m + r, D - m + p.beta_a) - betaln(r, p.beta_a)

    K = len(rows)
    counts = {}
    for row in rows:
        counts[row] = counts.get(row, 0) + 1
    lp = gammaln(k_star + 1) - gammaln(k_star - K + 1) - sum(gammaln(c + 1) for c in counts.values())
    lp += sum(row_lp(sum(row)) for row in rows) + (k_star - K) * row_lp(0)
    return lp


def test_infinite_limit_matches_finite_model_per_class():
    D, k_star = 3, 10_000
    p = IbpParams(alpha_a=1.3, beta_a=0.8)
    patterns = [t for t in product((0, 1), repeat=D) if any(t)]
    for K in range(3):
        for rows in combinations_with_replacement(patterns, K):
            A = np.array(rows, dtype=np.int8).reshape(K, D)
            exact = math.exp(log_prob_activations(A, p))
            finite = math.exp(_finite_class_log_prob(list(rows), D, p, k_star))
            assert finite == pytest.approx(exact, rel=0.01), rows


@pytest.mark.parametrize("m,D,beta,expected", [(0, 10, 1.0, 0.0), (9, 10, 1.0, 0.9), (5, 10, 10.0, 5 / 19)])
def test_prior_prob_entry_active(m, D, beta, expected):
    assert prior_prob_entry_active(m, D, beta) == pytest.approx(expected, abs=1e-15)


def test_prior_prob_entry_active_rejects_out_of_range():
    with pytest.raises(ValueError):
        prior_prob_entry_active(10, 10, 1.0)


def test_new_feature_rate_values():
    assert new_feature_rate(P11, 1) == 1.0
    assert new_feature_rate(IbpParams(alpha_a=1.0, beta_a=10.0), 101) == pytest.approx(10 / 110)


def test_new_feature_count_zero_alpha():
    rng = rng_stream(0)
    p = IbpParams(alpha_a=0.0, beta_a=1.0)
    assert all(sample_new_feature_count(p, 5, rng) == 0 for _ in range(100))


def test_new_feature_count_tail_frequency():
    rng = rng_stream(0)
    p = IbpParams(alpha_a=1.0, beta_a=10.0)
    hits = np.mean([sample_new_feature_count(p, 101, rng) >= 1 for _ in range(100_000)])
    assert abs(hits - (1 - math.exp(-10 / 110))) < 0.005


@pytest.mark.parametrize("K,D,mean,tol", [(0, 1, 0.5, 0.01), (5, 3, 36 / 17, 0.03)])
def test_sample_alpha_a_mean(K, D, mean, tol):
    rng = rng_stream(1)
    x = [sample_alpha_a(K, P11, D, rng).alpha_a for _ in range(40_000)]
    assert abs(np.mean(x) - mean) < tol


def test_beta_accept_empty_matrix_is_harmonic_difference():
    A = np.zeros((0, 7), dtype=np.int8)
    p = IbpParams(alpha_a=1.4, beta_a=0.5)
    got = log_accept_beta_a(A, p, 2.0)
    expected = p.alpha_a * (harmonic_rate(0.5, 7) - harmonic_rate(2.0, 7))
    assert got == pytest.approx(expected, abs=1e-12)


def test_beta_accept_same_value_is_zero():
    A = np.array([[1, 0, 1, 1]])
    assert log_accept_beta_a(A, P11, 1.0) == 0.0


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_beta_accept_matches_log_prob_difference(seed):
    rng = np.random.default_rng(seed)
    A = rng.integers(0, 2, size=(rng.integers(0, 5), 6))
    p = IbpParams(alpha_a=rng.uniform(0.1, 3), beta_a=rng.uniform(0.1, 3))
    b2 = rng.uniform(0.05, 5)
    expected = log_prob_activations(A, IbpParams(p.alpha_a, b2)) - log_prob_activations(A, p)
    assert log_accept_beta_a(A, p, b2) == pytest.approx(expected, abs=1e-12)


def test_mh_step_beta_returns_params():
    rng = rng_stream(0)
    p, acc = mh_step_beta_a(np.array([[1, 1, 0]]), P11, rng)
    assert isinstance(acc, bool)
    assert p.beta_a > 0


def test_prior_sweep_has_no_zero_rows():
    rng = rng_stream(0)
    A = np.zeros((0, 10), dtype=np.int8)
    for _ in range(50):
        A = prior_gibbs_sweep(A, P11, rng)
        assert A.shape[0] == 0 or A.any(axis=1).all()


def test_prior_reproduction_small_run():
    # short version of the long-run acceptance check
    mean_k = prior_chain_mean_k(P11, 10, 10_000, rng_stream(3), burn_in=500)
    assert abs(mean_k - harmonic_rate(1.0, 10)) / harmonic_rate(1.0, 10) < 0.08
