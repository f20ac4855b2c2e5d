"""scikit-learn style wrapper around the tempered Gibbs sampler."""

import numpy as np
from scipy.optimize import nnls
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, validate_data

from .model import HyperConfig
from .sampler import run


def fcls(X, F, delta=1e3):
    """Fully constrained least squares abundances of rows of ``X`` given endmembers ``F``.

    Nonnegativity is exact; the sum-to-one constraint is enforced by an
    augmented row weighted by ``delta`` and then made exact by renormalising.
    """
    X = np.atleast_2d(np.asarray(X, float))
    F = np.atleast_2d(np.asarray(F, float))
    K = F.shape[0]
    M = np.vstack([F.T, delta * np.ones((1, K))])
    out = np.empty((X.shape[0], K))
    for n, x in enumerate(X):
        s, _ = nnls(M, np.append(x, delta))
        tot = s.sum()
        out[n] = s / tot if tot > 0 else np.full(K, 1.0 / K)
    return out


class BNUnmixer(TransformerMixin, BaseEstimator):
    """Bayesian nonparametric unmixing of pixel spectra.

    Learns the number of endmembers, the endmember spectra and the per-pixel
    abundances from ``X`` (n_pixels x n_bands) by a tempered Gibbs sampler,
    keeping the highest-posterior sample.

    Parameters
    ----------
    n_iter : int
        Gibbs sweeps per chain.
    n_chains : int
        Number of tempered chains (temperatures ``ladder_ratio ** i``).
    gamma_w : float
        Strength of the distance prior tying endmember weights together.
    p_plus : float
        Probability of proposing exactly one new endmember at a band.
    t_corr : float
        Correlation above which two endmembers are proposed for merging.
    burn_in_fraction : float
    random_state : int
        Seed; identical seeds give identical fits.

    Attributes
    ----------
    endmembers_ : ndarray of shape (n_components_, n_features_in_)
    abundances_ : ndarray of shape (n_samples, n_components_)
        MAP abundances of the training pixels.
    n_components_ : int
        Estimated number of endmembers.
    noise_variance_ : float
    result_ : UnmixingResult
        Full sampler output including the per-sweep trace.
    """

    def __init__(self, n_iter=2000, n_chains=5, gamma_w=100.0, p_plus=0.1, t_corr=0.95,
                 ladder_ratio=2.0, burn_in_fraction=0.2, random_state=0):
        self.n_iter = n_iter
        self.n_chains = n_chains
        self.gamma_w = gamma_w
        self.p_plus = p_plus
        self.t_corr = t_corr
        self.ladder_ratio = ladder_ratio
        self.burn_in_fraction = burn_in_fraction
        self.random_state = random_state

    def _config(self):
        return HyperConfig(n_iter=self.n_iter, n_chains=self.n_chains, gamma_w=self.gamma_w,
                           p_plus=self.p_plus, t_corr=self.t_corr, ladder_ratio=self.ladder_ratio,
                           burn_in_fraction=self.burn_in_fraction)

    def fit(self, X, y=None):
        X = validate_data(self, X, dtype=np.float64, ensure_min_features=2)
        seed = 0 if self.random_state is None else int(self.random_state)
        self.result_ = run(X, self._config(), seed=seed)
        self.endmembers_ = self.result_.endmembers.copy()
        self.abundances_ = self.result_.abundances.copy()
        self.n_components_ = self.endmembers_.shape[0]
        self.noise_variance_ = float(self.result_.map_state.sigma_z2)
        return self

    def transform(self, X):
        """Constrained least-squares abundances of ``X`` on the learned endmembers."""
        check_is_fitted(self, "endmembers_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return fcls(X, self.endmembers_)

    def inverse_transform(self, S):
        """Reconstruct spectra from abundances."""
        check_is_fitted(self, "endmembers_")
        S = check_array(S, dtype=np.float64)
        if S.shape[1] != self.n_components_:
            raise ValueError(f"S has {S.shape[1]} columns, expected {self.n_components_}")
        return S @ self.endmembers_
