"""Seedable sampling primitives.

Everything here takes an explicit :class:`numpy.random.Generator`; one
generator ("stream") is owned by exactly one tempered chain.  The two
constrained samplers (truncated normal and Gaussian restricted to the
probability simplex) are vectorised because the sampler calls them once per
weight row and once per abundance sweep over all pixels.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, log_ndtr, ndtr, ndtri, ndtri_exp

from .exceptions import ContractError, InvalidParameterError

RngStream = np.random.Generator

# standardised lower bound above which the exponential-proposal tail sampler is used
_TAIL_THRESHOLD = 2.0
SIMPLEX_TOL = 1e-9
_MAX_FLOAT = np.finfo(float).max


def rng_stream(seed, stream_id=0):
    """Return the generator for ``(seed, stream_id)``.

    Identical pairs give bit-identical sequences; distinct stream ids are
    spawned children of the same seed sequence and are independent.
    """
    seq = np.random.SeedSequence(int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True)
class TruncatedNormalSpec:
    """Normal(mean, variance) restricted to ``[lower, inf)``."""

    mean: float
    variance: float
    lower: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.variance)):
            raise InvalidParameterError("mean and variance must be finite")
        if self.variance <= 0:
            raise InvalidParameterError(f"variance must be > 0, got {self.variance}")
        if np.isnan(self.lower) or self.lower == np.inf:
            raise InvalidParameterError("lower bound must leave a nonempty support")


def _tail_exponential(a, rng):
    # Robert (1995) exponential proposal for N(0,1) restricted to [a, inf), a > 0
    out = np.empty_like(a)
    todo = np.arange(a.size)
    while todo.size:
        at = a[todo]
        rate = 0.5 * (at + np.sqrt(at * at + 4.0))
        z = at + rng.exponential(size=at.size) / rate
        ok = rng.random(at.size) <= np.exp(-0.5 * (z - rate) ** 2)
        out[todo[ok]] = z[ok]
        todo = todo[~ok]
    return out


def _right_side(a, b, u):
    # inverse CDF for a >= 0 in log space, exact far into the tail
    la = log_ndtr(-a)
    lb = log_ndtr(-b)
    logp = la + np.log1p((1.0 - u) * np.expm1(lb - la))
    return -ndtri_exp(logp)


def standard_truncated_normal(a, b, rng):
    """Draw N(0, 1) restricted to ``[a, b]`` elementwise (``b`` may be inf)."""
    a = np.asarray(a, float).ravel()
    b = np.asarray(b, float).ravel()
    if a.shape != b.shape:
        a, b = (x.ravel() for x in np.broadcast_arrays(a, b))
    u = rng.random(a.size)
    right = a >= 0
    if right.all():
        tail = (a > _TAIL_THRESHOLD) & np.isinf(b)
        if not tail.any():
            return np.clip(_right_side(a, b, u), a, b)
    z = np.empty(a.size)
    tail = (a > _TAIL_THRESHOLD) & np.isinf(b)
    right &= ~tail
    left = (b <= 0) & ~right & ~tail
    mid = ~(tail | right | left)
    tiny = mid & (b - a < 1e-8)
    mid &= ~tiny

    if tail.any():
        z[tail] = _tail_exponential(a[tail], rng)
    if right.any():
        z[right] = _right_side(a[right], b[right], u[right])
    if left.any():
        z[left] = -_right_side(-b[left], -a[left], u[left])
    if mid.any():
        pa = ndtr(a[mid])
        pb = ndtr(b[mid])
        z[mid] = ndtri(pa + u[mid] * (pb - pa))
    if tiny.any():
        z[tiny] = a[tiny] + u[tiny] * (b[tiny] - a[tiny])
    return np.clip(z, a, b)


def truncated_normal(mean, std, lower, upper, rng):
    """Vectorised draw from Normal(mean, std**2) restricted to ``[lower, upper]``.

    Entries with ``std == 0`` return ``mean`` clipped into the interval.
    Output has the broadcast shape of the arguments.
    """
    mean, std, lower, upper = np.broadcast_arrays(mean, std, lower, upper)
    shape = mean.shape
    mean = mean.astype(float).ravel()
    std, lower, upper = (np.asarray(x, float).ravel() for x in (std, lower, upper))
    if np.any(upper < lower):
        raise InvalidParameterError("empty truncation interval")
    live = std > 0
    if live.all():
        z = standard_truncated_normal((lower - mean) / std, (upper - mean) / std, rng)
        return np.clip(mean + std * z, lower, upper).reshape(shape)
    out = np.clip(mean, lower, upper)
    if live.any():
        s = std[live]
        m = mean[live]
        z = standard_truncated_normal((lower[live] - m) / s, (upper[live] - m) / s, rng)
        out[live] = np.clip(m + s * z, lower[live], upper[live])
    return out.reshape(shape)


def sample_truncated_normal(spec, rng):
    """One draw from ``spec`` (a :class:`TruncatedNormalSpec`)."""
    std = np.sqrt(spec.variance)
    return float(truncated_normal(spec.mean, std, spec.lower, np.inf, rng))


def sample_simplex_gaussian(mean, covariance, current, rng, pivot=None):
    """One Gibbs scan of a Gaussian restricted to the probability simplex.

    Parameters
    ----------
    mean : array, shape (K,) or (N, K)
        Unconstrained Gaussian mean; one row per independent target.
    covariance : array, shape (K, K)
        Shared symmetric positive definite covariance.
    current : array, same shape as ``mean``
        Current point(s) on the simplex.
    pivot : int, optional
        The coordinate held redundant (absorbing the sum constraint) during
        this scan.  Drawn uniformly when omitted.

    Returns
    -------
    ndarray
        New point(s) on the simplex, same shape as ``current``.
    """
    current = np.asarray(current, float)
    single = current.ndim == 1
    s = np.atleast_2d(current).copy()
    mu = np.broadcast_to(np.atleast_2d(np.asarray(mean, float)), s.shape)
    K = s.shape[1]
    if np.any(np.abs(s.sum(axis=1) - 1.0) > SIMPLEX_TOL) or np.any(s < -SIMPLEX_TOL):
        raise ContractError("current point is not on the simplex")
    if K == 1:
        out = np.ones_like(s)
        return out[0] if single else out

    cov = np.asarray(covariance, float)
    cov = 0.5 * (cov + cov.T)
    cov = cov + (1e-10 * np.trace(cov) / K) * np.eye(K)
    prec = np.linalg.inv(cov)
    if pivot is None:
        pivot = int(rng.integers(K))
    r = int(pivot) % K
    s = np.clip(s, 0.0, None)
    for j in range(K):
        if j == r:
            continue
        # move mass between j and the pivot: s_j += t, s_r -= t
        lam = prec[j, j] - 2.0 * prec[j, r] + prec[r, r]
        g = (s - mu) @ (prec[:, j] - prec[:, r])
        lo = -s[:, j]
        hi = s[:, r]
        if lam > 0:
            sd = 1.0 / np.sqrt(lam)
            m = -g / lam
            t = np.clip(m + sd * standard_truncated_normal((lo - m) / sd, (hi - m) / sd, rng), lo, hi)
        else:
            t = lo + rng.random(s.shape[0]) * (hi - lo)
        s[:, j] += t
        s[:, r] -= t
        np.clip(s, 0.0, None, out=s)
    s /= s.sum(axis=1, keepdims=True)
    return s[0] if single else s


def _positive(name, value):
    if not np.all(np.isfinite(value)) or np.any(np.asarray(value) <= 0):
        raise InvalidParameterError(f"{name} must be finite and > 0, got {value}")


def sample_gamma(shape, rate, rng):
    """Gamma draw in shape-rate parameterisation (mean ``shape / rate``)."""
    _positive("shape", shape)
    _positive("rate", rate)
    return float(rng.gamma(shape, 1.0 / rate))


def sample_inverse_gamma(shape, scale, rng):
    """Inverse-Gamma draw; mean ``scale / (shape - 1)`` for ``shape > 1``."""
    _positive("shape", shape)
    _positive("scale", scale)
    g = rng.gamma(shape, 1.0)
    if g > 0:
        with np.errstate(over="ignore"):
            return float(min(scale / g, _MAX_FLOAT))
    # tiny shapes underflow; G = G1 * U**(1/shape) with G1 ~ Gamma(shape + 1)
    log_g = np.log(rng.gamma(shape + 1.0, 1.0)) + np.log(rng.random()) / shape
    with np.errstate(over="ignore"):
        return float(min(np.exp(np.log(scale) - log_g), _MAX_FLOAT))


def sample_poisson(rate, rng):
    if not np.isfinite(rate) or rate < 0:
        raise InvalidParameterError(f"rate must be finite and >= 0, got {rate}")
    if rate == 0:
        return 0
    return int(rng.poisson(rate))


def sample_dirichlet(alphas, rng):
    alphas = np.asarray(alphas, float)
    _positive("alphas", alphas)
    return rng.dirichlet(alphas)


def sample_beta(a, b, rng):
    _positive("a", a)
    _positive("b", b)
    return float(rng.beta(a, b))


_STIRLING_MIN = 10.0
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def _stirling_remainder(x):
    # lgamma(x) - [(x - 1/2) ln x - x + ln(2 pi)/2], asymptotic series, x >= 10
    r = 1.0 / (x * x)
    return (1.0 / 12 - r * (1.0 / 360 - r * (1.0 / 1260 - r * (1.0 / 1680 - r * (
        1.0 / 1188 - r * (691.0 / 360360 - r / 156.0)))))) / x


def log_beta_fn(a, b):
    """``ln B(a, b) = ln G(a) + ln G(b) - ln G(a + b)``, elementwise.

    When an argument is large the three log-gamma terms nearly cancel, so
    the large-argument parts are combined analytically and only the small
    Stirling remainders are differenced.
    """
    _positive("a", a)
    _positive("b", b)
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    c = lo + hi
    out = np.empty(lo.shape)

    small = hi < _STIRLING_MIN
    out[small] = gammaln(lo[small]) + gammaln(hi[small]) - gammaln(c[small])

    both = lo >= _STIRLING_MIN
    x, y, z = lo[both], hi[both], c[both]
    out[both] = (_HALF_LOG_2PI - 0.5 * np.log(y) + (x - 0.5) * np.log(x / z)
                 + y * np.log1p(-x / z)
                 + _stirling_remainder(x) + _stirling_remainder(y) - _stirling_remainder(z))

    mixed = ~small & ~both
    x, y, z = lo[mixed], hi[mixed], c[mixed]
    # lgamma(y) - lgamma(y + x) for y >= 10
    ratio = ((y - 0.5) * np.log1p(-x / z) - x * np.log(z) + x
             + _stirling_remainder(y) - _stirling_remainder(z))
    out[mixed] = gammaln(x) + ratio
    return out[()] if out.ndim == 0 else out


def log_gamma_pdf(x, shape, rate):
    """Log density of Gamma(shape, rate) at ``x``; ``-inf`` outside the support."""
    if x <= 0:
        return -np.inf
    return shape * np.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x


def log_inverse_gamma_pdf(x, shape, scale):
    if x <= 0 or shape <= 0 or scale <= 0:
        return -np.inf
    return shape * np.log(scale) - gammaln(shape) - (shape + 1.0) * np.log(x) - scale / x
