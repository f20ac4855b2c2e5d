"""Synthetic hyperspectral scenes with known endmembers and abundances."""

from dataclasses import dataclass

import numpy as np

from .exceptions import InputError
from .kernels import rng_stream

# independent streams per generation stage, so changing e.g. the noise level
# leaves the endmembers and abundances of a seed untouched
_STREAM_ENDMEMBERS = 0
_STREAM_ABUNDANCES = 1
_STREAM_ILLUMINATION = 2
_STREAM_NOISE = 3


@dataclass
class SceneSpec:
    """Parameters of one synthetic scene.

    ``dirichlet_alpha`` defaults to ``1 / K``.  ``library`` is either a
    (K, D) array or a path to a CSV file with one spectrum per row; when
    unset, smooth synthetic spectra are generated.
    """

    K: int = 3
    D: int = 224
    width: int = 40
    height: int = 40
    snr_db: float = None
    beta_ip: float = None
    dirichlet_alpha: float = None
    library: object = None
    seed: int = 0

    def __post_init__(self):
        if self.K < 1 or self.D < 2 or self.width < 1 or self.height < 1:
            raise InputError("need K >= 1, D >= 2 and a nonempty pixel grid")
        if self.beta_ip is not None and not self.beta_ip > 0:
            raise InputError("beta_ip must be > 0")
        if self.dirichlet_alpha is not None and not self.dirichlet_alpha > 0:
            raise InputError("dirichlet_alpha must be > 0")

    @property
    def n_pixels(self):
        return self.width * self.height

    @property
    def alpha(self):
        return 1.0 / self.K if self.dirichlet_alpha is None else self.dirichlet_alpha


@dataclass
class GroundTruth:
    F_true: np.ndarray
    S_true: np.ndarray
    Z_clean: np.ndarray
    Z_noisy: np.ndarray
    S_scaled: np.ndarray = None


def bump_spectra(K, D, rng, max_corr=0.95, max_tries=1000):
    """Smooth positive spectra built from Gaussian bumps, each scaled to max 1.

    Spectra are redrawn until all pairwise correlations are below
    ``max_corr``.
    """
    x = np.linspace(0.0, 1.0, D)
    for _ in range(max_tries):
        F = np.empty((K, D))
        for k in range(K):
            n_bumps = rng.integers(2, 5)
            centers = rng.uniform(-0.1, 1.1, n_bumps)
            widths = rng.uniform(0.05, 0.3, n_bumps)
            heights = rng.uniform(0.2, 1.0, n_bumps)
            spec = 0.05 + (heights * np.exp(-0.5 * ((x[:, None] - centers) / widths) ** 2)).sum(axis=1)
            F[k] = spec / spec.max()
        if K == 1 or np.max(np.corrcoef(F)[np.triu_indices(K, 1)]) < max_corr:
            return F
    raise RuntimeError(f"could not draw {K} spectra with correlation < {max_corr}")


def generate_endmembers(spec):
    """Endmember matrix (K x D) from the library or the bump generator."""
    if spec.library is not None:
        if isinstance(spec.library, (str, bytes)) or hasattr(spec.library, "__fspath__"):
            from .io import load_matrix

            lib = load_matrix(spec.library)
        else:
            lib = np.asarray(spec.library, dtype=float)
        if lib.shape[0] < spec.K or lib.shape[1] != spec.D:
            raise InputError(f"library of shape {lib.shape} cannot supply {spec.K} x {spec.D}")
        return lib[: spec.K].copy()
    return bump_spectra(spec.K, spec.D, rng_stream(spec.seed, _STREAM_ENDMEMBERS))


def generate_abundances(spec):
    """Rows drawn iid from a symmetric Dirichlet."""
    rng = rng_stream(spec.seed, _STREAM_ABUNDANCES)
    if spec.K == 1:
        return np.ones((spec.n_pixels, 1))
    return rng.dirichlet(np.full(spec.K, spec.alpha), size=spec.n_pixels)


def awgn_variance(Z_clean, snr_db):
    return float(np.mean(np.square(Z_clean))) * 10.0 ** (-snr_db / 10.0)


def apply_awgn(Z_clean, snr_db, rng):
    """Add white Gaussian noise at ``snr_db`` relative to the clean mean square."""
    Z_clean = np.asarray(Z_clean, dtype=float)
    if snr_db is None or np.isinf(snr_db):
        return Z_clean.copy()
    v = awgn_variance(Z_clean, snr_db)
    return Z_clean + rng.normal(0.0, np.sqrt(v), size=Z_clean.shape)


def empirical_snr_db(Z_clean, Z_noisy):
    noise = np.asarray(Z_noisy) - np.asarray(Z_clean)
    return 10.0 * np.log10(np.mean(np.square(Z_clean)) / np.mean(np.square(noise)))


def apply_illumination(S_true, beta_ip, rng):
    """Scale each pixel's abundances by an iid Beta(beta_ip, 1) factor."""
    S_true = np.asarray(S_true, dtype=float)
    if beta_ip is None:
        return S_true.copy()
    scale = rng.beta(beta_ip, 1.0, size=S_true.shape[0])
    return S_true * scale[:, None]


def compose_scene(spec):
    """Endmembers, abundances, optional illumination and noise for ``spec``."""
    F = generate_endmembers(spec)
    S = generate_abundances(spec)
    S_eff = apply_illumination(S, spec.beta_ip, rng_stream(spec.seed, _STREAM_ILLUMINATION))
    Z_clean = S_eff @ F
    Z_noisy = apply_awgn(Z_clean, spec.snr_db, rng_stream(spec.seed, _STREAM_NOISE))
    return GroundTruth(F, S, Z_clean, Z_noisy, S_eff if spec.beta_ip is not None else None)
