"""Two-parameter Indian Buffet Process prior over the activation matrix.

Rows of ``A`` are features (endmembers), columns are the ``D`` spectral
bands, i.e. bands play the role of the IBP's "customers".
"""

from collections import Counter
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaln

from .kernels import log_beta_fn, log_gamma_pdf, sample_gamma, sample_poisson


@dataclass(frozen=True)
class IbpParams:
    """IBP concentration ``alpha_a``, ``beta_a`` and their Gamma hyperpriors.

    Hyperpriors are shape-rate: ``alpha_a ~ Gamma(h1_alpha, h2_alpha)``.
    """

    alpha_a: float = 1.0
    beta_a: float = 1.0
    h1_alpha: float = 1.0
    h2_alpha: float = 1.0
    h1_beta: float = 1.0
    h2_beta: float = 10.0

    def __post_init__(self):
        for name in ("beta_a", "h1_alpha", "h2_alpha", "h1_beta", "h2_beta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not self.alpha_a >= 0:
            raise ValueError("alpha_a must be >= 0")


def harmonic_rate(beta_a, D):
    """``sum_{d=1}^{D} beta_a / (beta_a + d - 1)``; ``alpha_a`` times this is E[K]."""
    d = np.arange(1, D + 1)
    return float(np.sum(beta_a / (beta_a + d - 1.0)))


def history_log_factorial(A):
    """``sum_h ln K_h!`` over distinct nonzero row patterns of ``A``."""
    counts = Counter(row.tobytes() for row in np.asarray(A, dtype=np.uint8) if row.any())
    return float(sum(gammaln(c + 1.0) for c in counts.values() if c > 1))


def log_prob_activations(A, p):
    """Log class probability of ``A`` under the infinite two-parameter IBP.

    All-zero rows are treated as inactive and ignored.
    """
    A = np.asarray(A)
    D = A.shape[1]
    m = A.sum(axis=1)
    m = m[m > 0].astype(float)
    K = m.size
    kbar = p.alpha_a * harmonic_rate(p.beta_a, D)
    if K == 0:
        return -kbar
    if p.alpha_a == 0:
        return -np.inf
    return (K * np.log(p.alpha_a * p.beta_a) - history_log_factorial(A) - kbar
            + float(np.sum(log_beta_fn(m, D - m + p.beta_a))))


def prior_prob_entry_active(m_excl, D, beta_a):
    """Prior probability that band ``d`` uses feature ``k`` given the other bands."""
    if not 0 <= m_excl <= D - 1:
        raise ValueError(f"m_excl must lie in [0, {D - 1}], got {m_excl}")
    return m_excl / (D + beta_a - 1.0)


def new_feature_rate(p, D):
    return p.alpha_a * p.beta_a / (p.beta_a + D - 1.0)


def sample_new_feature_count(p, D, rng):
    """Number of brand-new features owned by one band (Poisson)."""
    return sample_poisson(new_feature_rate(p, D), rng)


def sample_alpha_a(K, p, D, rng):
    """Conjugate Gamma update of ``alpha_a``; returns updated params."""
    shape = K + p.h1_alpha
    rate = harmonic_rate(p.beta_a, D) + p.h2_alpha
    return replace(p, alpha_a=sample_gamma(shape, rate, rng))


def log_accept_beta_a(A, p, beta_new):
    """Log Metropolis ratio for replacing ``beta_a`` by ``beta_new``.

    The proposal is the hyperprior itself, so only the IBP term remains.
    """
    return log_prob_activations(A, replace(p, beta_a=beta_new)) - log_prob_activations(A, p)


def mh_step_beta_a(A, p, rng):
    """Independence Metropolis step for ``beta_a``; returns (params, accepted)."""
    proposal = sample_gamma(p.h1_beta, p.h2_beta, rng)
    log_r = log_accept_beta_a(A, p, proposal)
    if np.log(rng.random()) < min(0.0, log_r):
        return replace(p, beta_a=proposal), True
    return p, False


def log_hyperprior(p):
    return (log_gamma_pdf(p.alpha_a, p.h1_alpha, p.h2_alpha)
            + log_gamma_pdf(p.beta_a, p.h1_beta, p.h2_beta))


def remove_empty_rows(A):
    """Indices of rows of ``A`` that have at least one active band."""
    return np.flatnonzero(np.asarray(A).any(axis=1))


def prior_gibbs_sweep(A, p, rng):
    """One band-by-band Gibbs sweep of ``A`` (shape ``(K, D)``) under the IBP prior alone.

    Useful for checking that the entry conditionals plus Poisson births
    reproduce the prior; the likelihood-driven version lives in the sampler.
    """
    A = np.asarray(A, dtype=np.int8)
    D = A.shape[1]
    rows = _prior_sweep_lists([list(r) for r in A], D, p, rng)
    return np.array(rows, dtype=np.int8).reshape(len(rows), D)


def _prior_sweep_lists(rows, D, p, rng):
    denom = D + p.beta_a - 1.0
    rate = new_feature_rate(p, D)
    m = [sum(r) for r in rows]
    for d in range(D):
        for k, row in enumerate(rows):
            m_excl = m[k] - row[d]
            new = 1 if (m_excl > 0 and rng.random() < m_excl / denom) else 0
            m[k] += new - row[d]
            row[d] = new
        if 0 in m:
            keep = [k for k in range(len(rows)) if m[k] > 0]
            rows = [rows[k] for k in keep]
            m = [m[k] for k in keep]
        for _ in range(rng.poisson(rate) if rate > 0 else 0):
            row = [0] * D
            row[d] = 1
            rows.append(row)
            m.append(1)
    return rows


def prior_chain_mean_k(p, D, n_sweeps, rng, burn_in=1000):
    """Run the prior-only Gibbs chain from ``K = 0``; post-burn-in mean of ``K``."""
    rows = []
    total = 0
    for t in range(n_sweeps + burn_in):
        rows = _prior_sweep_lists(rows, D, p, rng)
        if t >= burn_in:
            total += len(rows)
    return total / n_sweeps
