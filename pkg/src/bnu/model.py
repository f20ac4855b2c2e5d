"""State containers and the unnormalised log posterior of the unmixing model.

Observations ``Z`` (N pixels x D bands) are modelled as ``S @ (A * W)`` plus
white Gaussian noise of variance ``sigma_z2``.  A temperature ``T >= 1``
inflates the likelihood variance to ``T * sigma_z2``; priors are never
tempered.
"""

from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import ibp
from .exceptions import ContractError, InputError
from .ibp import IbpParams
from .kernels import SIMPLEX_TOL, log_gamma_pdf, log_inverse_gamma_pdf

NEG_INF = float("-inf")


@dataclass
class ObservedImage:
    """Pixel spectra ``Z`` (N x D) with optional grid shape and band centres."""

    Z: np.ndarray
    width: int = None
    height: int = None
    band_centers: np.ndarray = None

    def __post_init__(self):
        self.Z = np.asarray(self.Z, dtype=float)
        if self.Z.ndim != 2:
            raise InputError(f"Z must be 2-D (pixels x bands), got shape {self.Z.shape}")
        N, D = self.Z.shape
        if N < 1 or D < 2:
            raise InputError(f"need N >= 1 pixels and D >= 2 bands, got {N} x {D}")
        if not np.all(np.isfinite(self.Z)):
            raise InputError("Z contains non-finite values")
        if self.width is None and self.height is None:
            self.width, self.height = N, 1
        elif self.width is None or self.height is None or self.width * self.height != N:
            raise InputError(f"width * height must equal N = {N}")
        if self.band_centers is not None:
            self.band_centers = np.asarray(self.band_centers, dtype=float)
            if self.band_centers.shape != (D,):
                raise InputError("band_centers must have one entry per band")

    @property
    def n_pixels(self):
        return self.Z.shape[0]

    @property
    def n_bands(self):
        return self.Z.shape[1]


@dataclass
class HyperConfig:
    """Fixed hyper-hyperparameters and run controls.

    Defaults for the priors, ``gamma_w``, ``p_plus``, ``t_corr`` and ``n_iter``
    are the values used for the simulation study; the tempering ladder,
    swap period, cooling factor and burn-in are engineering defaults.
    Gamma hyperpriors are shape-rate.
    """

    gamma_w: float = 100.0
    h1_alpha_sigma: float = 1.0
    h2_alpha_sigma: float = 1.0
    h1_beta_sigma: float = 1.0
    h2_beta_sigma: float = 1.0
    h1_alpha_a: float = 1.0
    h2_alpha_a: float = 1.0
    h1_beta_a: float = 1.0
    h2_beta_a: float = 10.0
    p_plus: float = 0.1
    t_corr: float = 0.95
    n_iter: int = 10000
    n_chains: int = 5
    ladder_ratio: float = 2.0
    cooling_factor: float = 0.95
    swap_period: int = 10
    burn_in_fraction: float = 0.2
    merge_period: int = 1
    noise_hyper_step: float = 0.1
    new_weight_scans: int = 5
    residual_births: bool = True

    def __post_init__(self):
        positive = ("gamma_w", "h1_alpha_sigma", "h2_alpha_sigma", "h1_beta_sigma",
                    "h2_beta_sigma", "h1_alpha_a", "h2_alpha_a", "h1_beta_a", "h2_beta_a",
                    "noise_hyper_step")
        for name in positive:
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be > 0")
        if not 0 < self.p_plus < 1:
            raise InputError("p_plus must lie in (0, 1)")
        if not 0 < self.t_corr <= 1:
            raise InputError("t_corr must lie in (0, 1]")
        if self.n_iter < 1:
            raise InputError("n_iter must be >= 1")
        if self.n_chains < 1:
            raise InputError("n_chains must be >= 1")
        if not self.ladder_ratio >= 1:
            raise InputError("ladder_ratio must be >= 1")
        if not 0 < self.cooling_factor <= 1:
            raise InputError("cooling_factor must lie in (0, 1]")
        if self.swap_period < 1 or self.merge_period < 1:
            raise InputError("swap_period and merge_period must be >= 1")
        if not 0 <= self.burn_in_fraction < 1:
            raise InputError("burn_in_fraction must lie in [0, 1)")
        if self.new_weight_scans < 1:
            raise InputError("new_weight_scans must be >= 1")

    def ibp_params(self, alpha_a=1.0, beta_a=1.0):
        return IbpParams(alpha_a, beta_a, self.h1_alpha_a, self.h2_alpha_a,
                         self.h1_beta_a, self.h2_beta_a)

    def temperatures(self):
        return [self.ladder_ratio ** i for i in range(self.n_chains)]

    @classmethod
    def field_types(cls):
        return {f.name: f.type for f in fields(cls)}


@dataclass
class ModelState:
    """One posterior sample.

    ``A`` (K x D, int8) activations, ``W`` (K x D) nonnegative weights,
    ``S`` (N x K) abundances with rows on the simplex.
    """

    A: np.ndarray
    W: np.ndarray
    S: np.ndarray
    sigma_z2: float
    alpha_sigma: float
    beta_sigma: float
    ibp: IbpParams = field(default_factory=IbpParams)

    @property
    def K(self):
        return self.A.shape[0]

    def copy(self):
        return replace(self, A=self.A.copy(), W=self.W.copy(), S=self.S.copy())

    def endmembers(self):
        return endmembers(self)

    def check(self, n_pixels=None, n_bands=None):
        """Raise :class:`ContractError` if any state invariant is broken."""
        K, D = self.A.shape
        if self.W.shape != (K, D) or self.S.shape[1] != K:
            raise ContractError(f"inconsistent shapes A{self.A.shape} W{self.W.shape} S{self.S.shape}")
        if n_pixels is not None and self.S.shape[0] != n_pixels:
            raise ContractError("S has the wrong number of rows")
        if n_bands is not None and D != n_bands:
            raise ContractError("A has the wrong number of bands")
        if not np.isin(self.A, (0, 1)).all():
            raise ContractError("A must be binary")
        if np.any(self.W < 0):
            raise ContractError("W must be nonnegative")
        if not simplex_rows_ok(self.S):
            raise ContractError("rows of S must lie on the simplex")
        if not self.sigma_z2 > 0:
            raise ContractError("sigma_z2 must be > 0")


def simplex_rows_ok(S, tol=SIMPLEX_TOL):
    S = np.asarray(S)
    if S.shape[1] == 0:
        return False
    return bool(np.all(S >= -tol) and np.all(np.abs(S.sum(axis=1) - 1.0) <= tol))


def endmembers(state):
    """``F = A * W`` elementwise."""
    return state.A * state.W


def residual_sum_squares(Z, state):
    R = np.asarray(Z) - state.S @ endmembers(state)
    return float(np.einsum("ij,ij->", R, R))


def _as_array(Z):
    return Z.Z if isinstance(Z, ObservedImage) else np.asarray(Z, dtype=float)


def log_likelihood(Z, state, temperature=1.0):
    """Gaussian log likelihood with variance ``temperature * sigma_z2``."""
    Z = _as_array(Z)
    N, D = Z.shape
    if state.S.shape[0] != N or state.A.shape[1] != D or state.S.shape[1] != state.A.shape[0]:
        raise ContractError("Z and state dimensions disagree")
    var = temperature * state.sigma_z2
    rss = residual_sum_squares(Z, state)
    return -0.5 * N * D * np.log(2.0 * np.pi * var) - rss / (2.0 * var)


def log_prior_weights(W, gamma_w):
    """Distance prior on the weight rows (unnormalised)."""
    W = np.asarray(W, dtype=float)
    if np.any(W < 0):
        return NEG_INF
    if W.shape[0] == 0:
        return 0.0
    dev = W - W.mean(axis=0)
    return -gamma_w * float(np.einsum("ij,ij->", dev, dev))


def log_prior_noise(state, cfg):
    """Inverse-Gamma prior on ``sigma_z2`` plus Gamma hyperpriors on its parameters."""
    return (log_inverse_gamma_pdf(state.sigma_z2, state.alpha_sigma, state.beta_sigma)
            + log_gamma_pdf(state.alpha_sigma, cfg.h1_alpha_sigma, cfg.h2_alpha_sigma)
            + log_gamma_pdf(state.beta_sigma, cfg.h1_beta_sigma, cfg.h2_beta_sigma))


def log_prior(state, cfg):
    """Every prior factor except the (constant) uniform prior on ``S``."""
    if state.K == 0 or not simplex_rows_ok(state.S) or not np.isin(state.A, (0, 1)).all():
        return NEG_INF
    lw = log_prior_weights(state.W, cfg.gamma_w)
    if lw == NEG_INF:
        return NEG_INF
    return (lw + log_prior_noise(state, cfg)
            + ibp.log_prob_activations(state.A, state.ibp) + ibp.log_hyperprior(state.ibp))


def log_posterior(Z, state, cfg, temperature=1.0):
    """Unnormalised log posterior; ``-inf`` when any constraint is violated."""
    lp = log_prior(state, cfg)
    if lp == NEG_INF:
        return NEG_INF
    return log_likelihood(Z, state, temperature) + lp
