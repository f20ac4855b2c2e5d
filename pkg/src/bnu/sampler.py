"""MCMC inference for the nonparametric unmixing model.

One sweep of a chain updates, in order: the noise variance, the noise
hyperparameters, all abundance rows, all weight rows, the activations band by
band (each band followed by a new-feature proposal), endmember merges and
the IBP hyperparameters.  Several chains run at increasing temperatures,
exchange states every ``swap_period`` sweeps and are cooled towards 1.

Temperatures multiply the likelihood variance.  ``temperature=np.inf``
switches the likelihood off entirely, which is how the prior-only checks
are run.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from . import ibp
from .exceptions import InputError
from .kernels import (log_gamma_pdf, log_inverse_gamma_pdf, rng_stream, sample_gamma,
                      sample_inverse_gamma, sample_simplex_gaussian, truncated_normal)
from .model import (NEG_INF, HyperConfig, ModelState, ObservedImage, endmembers,
                    log_likelihood, log_posterior, residual_sum_squares)

logger = logging.getLogger(__name__)

SWAP_STREAM = 1 << 20


def _precision_scale(state, temperature):
    # 1 / (T sigma^2); zero when the likelihood is switched off
    return 0.0 if np.isinf(temperature) else 1.0 / (temperature * state.sigma_z2)


def _data(Z):
    return Z.Z if isinstance(Z, ObservedImage) else np.asarray(Z, dtype=float)


# --------------------------------------------------------------------------
# noise variance and its hyperparameters

def sigma2_conditional(Z, state, temperature=1.0):
    """Shape and scale of the Inverse-Gamma conditional of ``sigma_z2``."""
    Z = _data(Z)
    N, D = Z.shape
    if np.isinf(temperature):
        return state.alpha_sigma, state.beta_sigma
    rss = residual_sum_squares(Z, state)
    return state.alpha_sigma + 0.5 * N * D, state.beta_sigma + 0.5 * rss / temperature


def sample_sigma2(Z, state, temperature, rng):
    shape, scale = sigma2_conditional(Z, state, temperature)
    return sample_inverse_gamma(shape, scale, rng)


def noise_hyper_log_target(sigma_z2, alpha_sigma, beta_sigma, cfg):
    """Log of ``InvGamma(sigma_z2 | alpha, beta) Gamma(alpha) Gamma(beta)``."""
    return (log_inverse_gamma_pdf(sigma_z2, alpha_sigma, beta_sigma)
            + log_gamma_pdf(alpha_sigma, cfg.h1_alpha_sigma, cfg.h2_alpha_sigma)
            + log_gamma_pdf(beta_sigma, cfg.h1_beta_sigma, cfg.h2_beta_sigma))


def log_ratio_noise_hypers(state, cfg, alpha_new=None, beta_new=None):
    """Log Metropolis ratio for moving the noise hyperparameters.

    The reflected Gaussian random walk is symmetric, so the ratio is the
    target ratio.
    """
    a1 = state.alpha_sigma if alpha_new is None else alpha_new
    b1 = state.beta_sigma if beta_new is None else beta_new
    return (noise_hyper_log_target(state.sigma_z2, a1, b1, cfg)
            - noise_hyper_log_target(state.sigma_z2, state.alpha_sigma, state.beta_sigma, cfg))


def mh_step_noise_hypers(state, cfg, rng):
    """Random-walk Metropolis on ``alpha_sigma`` then ``beta_sigma``.

    Returns ``(alpha_sigma, beta_sigma, n_accepted)``; ``state`` is untouched.
    """
    step = cfg.noise_hyper_step
    alpha, beta = state.alpha_sigma, state.beta_sigma
    accepted = 0
    prop = abs(alpha + step * rng.standard_normal())
    cur = replace(state, alpha_sigma=alpha, beta_sigma=beta)
    if prop > 0 and np.log(rng.random()) < log_ratio_noise_hypers(cur, cfg, alpha_new=prop):
        alpha = prop
        accepted += 1
    prop = abs(beta + step * rng.standard_normal())
    cur = replace(state, alpha_sigma=alpha, beta_sigma=beta)
    if prop > 0 and np.log(rng.random()) < log_ratio_noise_hypers(cur, cfg, beta_new=prop):
        beta = prop
        accepted += 1
    return alpha, beta, accepted


# --------------------------------------------------------------------------
# abundances

def abundance_conditional(Z, state, temperature=1.0):
    """Unconstrained Gaussian conditional of the abundance rows.

    Returns ``(means, covariance)`` with ``means`` of shape (N, K) and the
    covariance shared by every pixel.
    """
    Z = _data(Z)
    F = endmembers(state)
    K = F.shape[0]
    G = F @ F.T
    tr = np.trace(G)
    if tr <= 0:
        return np.full((Z.shape[0], K), 1.0 / K), np.eye(K) * 1e12
    G = G + (1e-8 * tr / K) * np.eye(K)
    means = np.linalg.solve(G, F @ Z.T).T
    if np.isinf(temperature):
        return means, np.eye(K) * 1e300
    cov = temperature * state.sigma_z2 * np.linalg.inv(G)
    return means, cov


def sample_abundance_row(z_n, state, n, temperature, rng, pivot=None):
    """Gibbs scan of pixel ``n``'s abundances given spectrum ``z_n``."""
    if state.K == 1:
        return np.ones(1)
    mean, cov = abundance_conditional(np.atleast_2d(z_n), state, temperature)
    return sample_simplex_gaussian(mean[0], cov, state.S[n], rng, pivot=pivot)


def sample_abundances(Z, state, temperature, rng, pivot=None):
    """Gibbs scan of every abundance row at once (they share one covariance)."""
    if state.K == 1:
        return np.ones_like(state.S)
    means, cov = abundance_conditional(Z, state, temperature)
    return sample_simplex_gaussian(means, cov, state.S, rng, pivot=pivot)


# --------------------------------------------------------------------------
# weights

def weight_conditional(Z, state, k, temperature, gamma_w, residual=None):
    """Mean and diagonal precision of the Gaussian conditional of weight row ``k``.

    ``residual`` may pass in ``Z - S F`` to avoid recomputing it.
    """
    Z = _data(Z)
    K = state.K
    a = state.A[k].astype(float)
    s = state.S[:, k]
    f = a * state.W[k]
    if residual is None:
        residual = Z - state.S @ endmembers(state)
    r_excl = residual + np.outer(s, f)
    lik = _precision_scale(state, temperature)
    precision = lik * float(s @ s) * a + 2.0 * gamma_w * (1.0 - 1.0 / K)
    others = state.W.sum(axis=0) - state.W[k]
    natural = lik * a * (s @ r_excl) + (2.0 * gamma_w / K) * others
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = np.where(precision > 0, natural / precision, 0.0)
    return mean, precision


def sample_weight_row(Z, state, k, temperature, gamma_w, rng, residual=None):
    """Draw weight row ``k`` from its truncated (w >= 0) Gaussian conditional.

    Bands with zero conditional precision carry no information (a single
    endmember with that band inactive) and keep their current value.
    """
    mean, precision = weight_conditional(Z, state, k, temperature, gamma_w, residual)
    out = state.W[k].copy()
    live = precision > 0
    if live.any():
        out[live] = truncated_normal(mean[live], 1.0 / np.sqrt(precision[live]),
                                     0.0, np.inf, rng)
    return out


def sample_weights(Z, state, temperature, gamma_w, rng):
    """Sequential scan over all weight rows; returns the new ``W``."""
    Z = _data(Z)
    st = state.copy()
    R = Z - st.S @ endmembers(st)
    for k in range(st.K):
        f_old = st.A[k] * st.W[k]
        st.W[k] = sample_weight_row(Z, st, k, temperature, gamma_w, rng, residual=R)
        R -= np.outer(st.S[:, k], st.A[k] * st.W[k] - f_old)
    return st.W


# --------------------------------------------------------------------------
# activations and new features

def activation_probability(r_col, contrib, a_old, prior_p, lik_scale):
    """Posterior probability that one activation entry is 1.

    ``r_col`` is the current band residual and ``contrib`` the column that the
    entry adds to the reconstruction when active.
    """
    if prior_p <= 0:
        return 0.0
    r0 = r_col + a_old * contrib
    # log N(r0 - c) - log N(r0) under variance 1 / lik_scale
    dll = lik_scale * (float(r0 @ contrib) - 0.5 * float(contrib @ contrib))
    logit = math.log(prior_p) - math.log1p(-prior_p) + dll
    if logit >= 0:
        return 1.0 / (1.0 + math.exp(-logit))
    e = math.exp(logit)
    return e / (1.0 + e)


def _drop_features(state, keep):
    """Remove features not in ``keep``; surviving abundance rows are renormalised."""
    S = state.S[:, keep]
    tot = S.sum(axis=1, keepdims=True)
    if S.shape[1]:
        dead = tot[:, 0] <= 0
        S = np.divide(S, tot, out=np.full_like(S, 1.0 / S.shape[1]), where=tot > 0)
        S[dead] = 1.0 / S.shape[1]
    return replace(state, A=state.A[keep], W=state.W[keep], S=S)


def remove_empty_features(state):
    """Delete features with an all-zero activation row."""
    keep = np.flatnonzero(state.A.any(axis=1))
    if keep.size == state.K:
        return state
    return _drop_features(state, keep)


def _activation_pass(Z, st, d, lik, rng):
    # in-place Gibbs update of column d; returns True if some row emptied
    K, D = st.A.shape
    if K == 0:
        return False
    r = Z[:, d] - st.S @ (st.A[:, d] * st.W[:, d])
    denom = D + st.ibp.beta_a - 1.0
    emptied = False
    for k in range(K):
        a_old = int(st.A[k, d])
        m_k = int(st.A[k].sum())
        prior_p = (m_k - a_old) / denom
        contrib = st.S[:, k] * st.W[k, d]
        p1 = activation_probability(r, contrib, a_old, prior_p, lik)
        a_new = 1 if rng.random() < p1 else 0
        if a_new != a_old:
            r += (a_old - a_new) * contrib
            st.A[k, d] = a_new
            emptied |= m_k - a_old + a_new == 0
    return emptied


def update_activations_band(Z, state, d, temperature, rng):
    """Gibbs update of column ``d`` of ``A``, followed by empty-row cleanup.

    Returns a new state; the new-feature proposal for the band is separate
    (:func:`propose_new_features`).
    """
    st = state.copy()
    if _activation_pass(_data(Z), st, d, _precision_scale(st, temperature), rng):
        st = remove_empty_features(st)
    return st


def log_birth_augmentation(k_plus, rate, p_plus):
    """``ln[Pois(K+) / (P+ 1[K+=1] + (1-P+) Pois(K+))]``."""
    if rate <= 0:
        return 0.0 if k_plus == 0 else NEG_INF
    log_pk = k_plus * math.log(rate) - rate - math.lgamma(k_plus + 1)
    pk = math.exp(log_pk)
    if pk == 0:
        return NEG_INF
    return log_pk - math.log(p_plus * (k_plus == 1) + (1.0 - p_plus) * pk)


def birth_acceptance(log_r, k_plus, rate, p_plus):
    """Acceptance probability ``min(1, r_aug)`` for ``K+`` new features."""
    la = log_r + log_birth_augmentation(k_plus, rate, p_plus)
    return 1.0 if la >= 0 else math.exp(la)


def sample_birth_count(rate, p_plus, rng):
    """``K+`` from the proposal mixture ``P+ 1[K+=1] + (1-P+) Pois(rate)``."""
    if rng.random() < p_plus:
        return 1
    return int(rng.poisson(rate)) if rate > 0 else 0


def sample_new_weights(W_existing, k_plus, gamma_w, n_scans, rng, scale=1.0):
    """Gibbs draws of ``k_plus`` new weight rows under the distance prior.

    Existing rows stay fixed.  A lone new row has a flat prior; it is then
    drawn uniformly on ``[0, scale]`` per band.
    """
    K0, D = W_existing.shape
    Kt = K0 + k_plus
    if Kt == 1:
        return rng.uniform(0.0, scale, size=(1, D))
    std = 1.0 / math.sqrt(2.0 * gamma_w * (1.0 - 1.0 / Kt))
    if k_plus == 1:
        # the conditional ignores the row's own value, so one draw is exact
        return truncated_normal(W_existing.mean(axis=0), std, 0.0, np.inf, rng)[None, :]
    start = W_existing.mean(axis=0) if K0 else rng.uniform(0.0, scale, size=D)
    W = np.vstack([W_existing, np.tile(start, (k_plus, 1))])
    total = W.sum(axis=0)
    for _ in range(n_scans):
        for j in range(K0, Kt):
            mean = (total - W[j]) / (Kt - 1)
            new = truncated_normal(mean, std, 0.0, np.inf, rng)
            total += new - W[j]
            W[j] = new
    return W[K0:]


def propose_new_features(Z, state, d, cfg, temperature, rng, scale=None, k_plus=None):
    """Metropolis proposal of new features active only in band ``d``.

    ``k_plus`` is normally drawn from the birth-count mixture; passing it
    fixes the count.  Returns ``(state, n_new)``; on rejection the input
    state is returned unchanged (same object).
    """
    Z = _data(Z)
    K, D = state.A.shape
    rate = ibp.new_feature_rate(state.ibp, D)
    if k_plus is None:
        k_plus = sample_birth_count(rate, cfg.p_plus, rng)
    if k_plus == 0:
        return state, 0
    if scale is None:
        scale = max(float(Z.max()), 1e-12)
    A_new = np.zeros((k_plus, D), dtype=state.A.dtype)
    A_new[:, d] = 1
    W_new = sample_new_weights(state.W, k_plus, cfg.gamma_w, cfg.new_weight_scans, rng, scale)
    S_new = rng.gamma(1.0 / max(K, 1), 1.0, size=(Z.shape[0], k_plus))
    S = np.hstack([state.S, S_new])
    tot = S.sum(axis=1, keepdims=True)
    S = np.divide(S, tot, out=np.full_like(S, 1.0 / S.shape[1]), where=tot > 0)
    proposal = replace(state, A=np.vstack([state.A, A_new]), W=np.vstack([state.W, W_new]), S=S)
    lik = _precision_scale(state, temperature)
    log_r = -0.5 * lik * (residual_sum_squares(Z, proposal) - residual_sum_squares(Z, state))
    if rng.random() < birth_acceptance(log_r, k_plus, rate, cfg.p_plus):
        return proposal, k_plus
    return state, 0


def propose_residual_feature(Z, state, cfg, temperature, rng, n_scans=3, lp_current=None):
    """Seed a dense feature from a poorly explained pixel.

    A pixel is drawn with probability proportional to its squared residual
    and its (clipped) spectrum becomes a new endmember active in every band.
    The abundances are refreshed with ``n_scans`` Gibbs scans and the weights
    with one, then the whole move is accepted on the tempered log-posterior
    ratio.  ``lp_current`` may carry the tempered log posterior of ``state``
    when the caller already has it.  Returns ``(state, accepted)``.
    """
    Z = _data(Z)
    if np.isinf(temperature) or state.K == 0:
        return state, 0
    R = Z - state.S @ endmembers(state)
    r2 = np.einsum("ij,ij->i", R, R)
    tot = r2.sum()
    if not tot > 0:
        return state, 0
    n = int(rng.choice(r2.size, p=r2 / tot))
    D = Z.shape[1]
    prop = replace(state,
                   A=np.vstack([state.A, np.ones((1, D), dtype=state.A.dtype)]),
                   W=np.vstack([state.W, np.clip(Z[n], 0.0, None)]),
                   S=np.hstack([state.S, np.zeros((Z.shape[0], 1))]))
    for i in range(n_scans):
        prop.S = sample_abundances(Z, prop, temperature, rng, pivot=(prop.K - 1 + i) % prop.K)
    prop.W = sample_weights(Z, prop, temperature, cfg.gamma_w, rng)
    lp_prop = log_posterior(Z, prop, cfg, temperature)
    lp_cur = log_posterior(Z, state, cfg, temperature) if lp_current is None else lp_current
    if lp_prop > NEG_INF and np.log(rng.random()) < lp_prop - lp_cur:
        return prop, 1
    return state, 0


def propose_feature_removal(Z, state, cfg, temperature, rng, n_scans=3, lp_current=None):
    """Counterpart of :func:`propose_residual_feature`: drop one feature.

    The feature with the least total abundance is removed, since that is
    where the seeding move leaves its spurious features; its abundance is
    spread over the rest by renormalisation, abundances and weights are refreshed as in the seeding
    move and the result is accepted on the tempered log-posterior ratio.
    Returns ``(state, accepted)``.
    """
    Z = _data(Z)
    if np.isinf(temperature) or state.K < 2:
        return state, 0
    k = int(np.argmin(state.S.sum(axis=0)))
    prop = _drop_features(state, np.delete(np.arange(state.K), k))
    for i in range(n_scans):
        prop.S = sample_abundances(Z, prop, temperature, rng, pivot=i % prop.K)
    prop.W = sample_weights(Z, prop, temperature, cfg.gamma_w, rng)
    lp_prop = log_posterior(Z, prop, cfg, temperature)
    lp_cur = log_posterior(Z, state, cfg, temperature) if lp_current is None else lp_current
    if lp_prop > NEG_INF and np.log(rng.random()) < lp_prop - lp_cur:
        return prop, 1
    return state, 0


# --------------------------------------------------------------------------
# merges

def row_correlations(F):
    """Pearson correlation between endmember rows; NaN for constant rows."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.corrcoef(F)


def merge_candidates(F, t_corr):
    """Pairs ``(i, j)`` with correlation above ``t_corr``, most correlated first."""
    K = F.shape[0]
    if K < 2:
        return []
    C = np.atleast_2d(row_correlations(F))
    iu, ju = np.triu_indices(K, 1)
    c = C[iu, ju]
    ok = np.isfinite(c) & (c > t_corr)
    order = np.argsort(-c[ok], kind="stable")
    return [(int(i), int(j)) for i, j in zip(iu[ok][order], ju[ok][order])]


def merged_state(state, i, j):
    """State with features ``i`` and ``j`` fused into one.

    The feature with more total abundance survives; activations are OR-ed,
    weights averaged by abundance mass and abundance columns summed.
    """
    mi, mj = state.S[:, i].sum(), state.S[:, j].sum()
    keep, drop = (i, j) if mi >= mj else (j, i)
    mk, md = max(mi, mj), min(mi, mj)
    A = state.A.copy()
    W = state.W.copy()
    S = state.S.copy()
    A[keep] = A[keep] | A[drop]
    if mk + md > 0:
        W[keep] = (mk * state.W[keep] + md * state.W[drop]) / (mk + md)
    else:
        W[keep] = 0.5 * (state.W[keep] + state.W[drop])
    S[:, keep] += S[:, drop]
    idx = np.delete(np.arange(state.K), drop)
    return replace(state, A=A[idx], W=W[idx], S=S[:, idx]), keep, drop


def propose_merge(Z, state, cfg, temperature, rng):
    """Metropolis merges of highly correlated endmember pairs.

    Each feature takes part in at most one proposal per call.  Returns
    ``(state, n_merged)``.
    """
    Z = _data(Z)
    pairs = merge_candidates(endmembers(state), cfg.t_corr)
    if not pairs:
        return state, 0
    ids = list(range(state.K))
    used = set()
    n_merged = 0
    current = state
    lp_cur = log_posterior(Z, current, cfg, temperature)
    for i0, j0 in pairs:
        if i0 in used or j0 in used:
            continue
        used.update((i0, j0))
        i, j = ids.index(i0), ids.index(j0)
        prop, keep, drop = merged_state(current, i, j)
        lp_prop = log_posterior(Z, prop, cfg, temperature)
        if lp_prop == NEG_INF:
            continue
        if np.log(rng.random()) < lp_prop - lp_cur:
            current, lp_cur = prop, lp_prop
            del ids[drop]
            n_merged += 1
    return current, n_merged


# --------------------------------------------------------------------------
# tempering

@dataclass
class Chain:
    state: ModelState
    temperature: float
    rng: np.random.Generator


@dataclass
class TemperedEnsemble:
    chains: list
    swap_period: int = 10
    cooling_factor: float = 0.95
    sweep: int = 0
    swap_rng: np.random.Generator = None
    n_swaps: int = 0

    @property
    def temperatures(self):
        return [c.temperature for c in self.chains]


def swap_log_acceptance(ll_i, ll_j, t_i, t_j):
    """Log acceptance for exchanging states between chains at ``t_i`` and ``t_j``."""
    return (1.0 / t_i - 1.0 / t_j) * (ll_j - ll_i)


def pt_swap(ensemble, Z, cfg, rng=None):
    """Adjacent-pair state exchanges; returns the number of accepted swaps."""
    rng = ensemble.swap_rng if rng is None else rng
    chains = ensemble.chains
    accepted = 0
    for i in range(len(chains) - 1):
        a, b = chains[i], chains[i + 1]
        la = log_likelihood(Z, a.state, 1.0)
        lb = log_likelihood(Z, b.state, 1.0)
        if np.log(rng.random()) < swap_log_acceptance(la, lb, a.temperature, b.temperature):
            a.state, b.state = b.state, a.state
            accepted += 1
    ensemble.n_swaps += accepted
    return accepted


def cool(ensemble, cfg=None):
    """Geometric cooling of every chain except the first, floored at 1."""
    c = ensemble.cooling_factor if cfg is None else cfg.cooling_factor
    for chain in ensemble.chains[1:]:
        chain.temperature = max(1.0, c * chain.temperature)
    ensemble.chains[0].temperature = 1.0
    return ensemble


# --------------------------------------------------------------------------
# driver

@dataclass
class SweepRecord:
    sweep: int
    K: int
    sigma_z2: float
    log_posterior: float
    accepted_new_features: int
    accepted_merges: int
    accepted_swaps: int
    map_log_posterior: float = None

    def as_dict(self):
        return asdict(self)


@dataclass
class UnmixingResult:
    map_state: ModelState
    map_log_posterior: float
    trace: list = field(default_factory=list)
    map_sweep: int = None

    @property
    def estimated_K(self):
        return self.map_state.K

    @property
    def endmembers(self):
        return endmembers(self.map_state)

    @property
    def abundances(self):
        return self.map_state.S


def initial_state(Z, cfg, rng):
    """``K = 1`` state with everything else drawn from its prior."""
    Z = _data(Z)
    N, D = Z.shape
    alpha_sigma = sample_gamma(cfg.h1_alpha_sigma, cfg.h2_alpha_sigma, rng)
    beta_sigma = sample_gamma(cfg.h1_beta_sigma, cfg.h2_beta_sigma, rng)
    sigma_z2 = sample_inverse_gamma(alpha_sigma, beta_sigma, rng)
    alpha_a = sample_gamma(cfg.h1_alpha_a, cfg.h2_alpha_a, rng)
    beta_a = sample_gamma(cfg.h1_beta_a, cfg.h2_beta_a, rng)
    scale = max(float(Z.max()), 1e-12)
    return ModelState(
        A=np.ones((1, D), dtype=np.int8),
        W=rng.uniform(0.0, scale, size=(1, D)),
        S=np.ones((N, 1)),
        sigma_z2=sigma_z2,
        alpha_sigma=alpha_sigma,
        beta_sigma=beta_sigma,
        ibp=cfg.ibp_params(alpha_a, beta_a),
    )


def gibbs_sweep(Z, state, cfg, temperature, rng, sweep=0):
    """One full sweep; returns ``(state, n_new_features, n_merges)``."""
    Z = _data(Z)
    D = Z.shape[1]
    st = state.copy()
    if st.K:
        st.sigma_z2 = sample_sigma2(Z, st, temperature, rng)
    st.alpha_sigma, st.beta_sigma, _ = mh_step_noise_hypers(st, cfg, rng)
    if st.K:
        st.S = sample_abundances(Z, st, temperature, rng, pivot=sweep % st.K)
        st.W = sample_weights(Z, st, temperature, cfg.gamma_w, rng)
    scale = max(float(Z.max()), 1e-12)
    lik = _precision_scale(st, temperature)
    n_new = 0
    for d in range(D):
        if _activation_pass(Z, st, d, lik, rng):
            st = remove_empty_features(st)
        st, k = propose_new_features(Z, st, d, cfg, temperature, rng, scale=scale)
        n_new += k
    if cfg.residual_births:
        lp = log_posterior(Z, st, cfg, temperature) if st.K and not np.isinf(temperature) else None
        st, k = propose_residual_feature(Z, st, cfg, temperature, rng, lp_current=lp)
        n_new += k
        st, k = propose_feature_removal(Z, st, cfg, temperature, rng, lp_current=None if k else lp)
        n_new -= k
    n_merge = 0
    if sweep % cfg.merge_period == 0:
        st, n_merge = propose_merge(Z, st, cfg, temperature, rng)
    st.ibp = ibp.sample_alpha_a(st.K, st.ibp, D, rng)
    st.ibp, _ = ibp.mh_step_beta_a(st.A, st.ibp, rng)
    return st, n_new, n_merge


def make_ensemble(Z, cfg, seed):
    chains = []
    for i, t in enumerate(cfg.temperatures()):
        rng = rng_stream(seed, i)
        chains.append(Chain(initial_state(Z, cfg, rng), float(t), rng))
    return TemperedEnsemble(chains, cfg.swap_period, cfg.cooling_factor,
                            swap_rng=rng_stream(seed, SWAP_STREAM))


def run(Z, cfg=None, seed=0, callback=None):
    """Run the tempered sampler and return the approximate MAP sample.

    Parameters
    ----------
    Z : ObservedImage or array (N, D)
    cfg : HyperConfig, optional
    seed : int
    callback : callable, optional
        Called as ``callback(record)`` after every sweep.
    """
    cfg = HyperConfig() if cfg is None else cfg
    if not isinstance(Z, ObservedImage):
        Z = ObservedImage(np.asarray(Z, dtype=float))
    X = Z.Z
    n_burn = int(math.floor(cfg.burn_in_fraction * cfg.n_iter))
    if cfg.n_iter - n_burn < 1:
        raise InputError("no sweeps left after burn-in")
    ens = make_ensemble(X, cfg, seed)
    best, best_lp, best_sweep = None, NEG_INF, None
    trace = []
    for t in range(cfg.n_iter):
        n_new = n_merge = 0
        for idx, chain in enumerate(ens.chains):
            chain.state, k_new, k_merge = gibbs_sweep(X, chain.state, cfg, chain.temperature,
                                                      chain.rng, sweep=t)
            if idx == 0:
                n_new, n_merge = k_new, k_merge
        n_swap = 0
        ens.sweep = t + 1
        if len(ens.chains) > 1 and (t + 1) % ens.swap_period == 0:
            n_swap = pt_swap(ens, X, cfg)
            cool(ens, cfg)
        head = ens.chains[0].state
        lp = log_posterior(X, head, cfg, 1.0)
        if t >= n_burn and (best is None or lp > best_lp):
            best, best_lp, best_sweep = head.copy(), lp, t
        rec = SweepRecord(t, head.K, head.sigma_z2, lp, n_new, n_merge, n_swap,
                          best_lp if best is not None else None)
        trace.append(rec)
        if callback is not None:
            callback(rec)
    logger.info("finished %d sweeps; MAP at sweep %s with K=%d", cfg.n_iter, best_sweep, best.K)
    return UnmixingResult(best, best_lp, trace, best_sweep)
