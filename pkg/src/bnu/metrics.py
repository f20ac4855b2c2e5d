"""Figures of merit for unmixing: spectral angles, SID, RMSE and dimensionality scores.

Endmembers are rows of ``F`` (K x D); abundances are columns of ``S`` (N x K).
Estimated and true endmembers are paired once by :func:`match_endmembers`
and every other metric is evaluated on that pairing.
"""

from dataclasses import asdict, dataclass, field
from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import InputError

SID_FLOOR = 1e-12
_EXHAUSTIVE_MAX = 8


def _angles(X, Y):
    # pairwise angles (degrees) between rows of X and rows of Y
    X = np.atleast_2d(np.asarray(X, float))
    Y = np.atleast_2d(np.asarray(Y, float))
    nx = np.linalg.norm(X, axis=1)
    ny = np.linalg.norm(Y, axis=1)
    denom = np.outer(nx, ny)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = (X @ Y.T) / denom
    cos = np.where(denom > 0, cos, 0.0)
    return np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))


def angle_cost_matrix(F_est, F_true):
    """Angles in degrees between every estimated row and every true row."""
    return _angles(F_est, F_true)


def match_endmembers(F_est, F_true):
    """Optimal one-to-one pairing of estimated and true endmembers.

    Minimises the summed spectral angle.  Small problems are solved by
    enumeration, larger ones by the Hungarian algorithm.

    Returns
    -------
    list of (int, int)
        ``(est_index, true_index)`` pairs sorted by true index; its length is
        ``min(K_est, K_true)``.
    """
    cost = angle_cost_matrix(F_est, F_true)
    n_est, n_true = cost.shape
    if n_est == 0 or n_true == 0:
        return []
    if min(n_est, n_true) <= _EXHAUSTIVE_MAX and max(n_est, n_true) <= _EXHAUSTIVE_MAX:
        best, best_cost = None, np.inf
        if n_est >= n_true:
            for est in permutations(range(n_est), n_true):
                c = cost[list(est), range(n_true)].sum()
                if c < best_cost:
                    best, best_cost = list(zip(est, range(n_true))), c
        else:
            for tru in permutations(range(n_true), n_est):
                c = cost[range(n_est), list(tru)].sum()
                if c < best_cost:
                    best, best_cost = list(zip(range(n_est), tru)), c
        pairs = best
    else:
        rows, cols = linear_sum_assignment(cost)
        pairs = list(zip(rows, cols))
    return sorted(((int(i), int(j)) for i, j in pairs), key=lambda p: p[1])


def matching_cost(F_est, F_true, pairs):
    cost = angle_cost_matrix(F_est, F_true)
    return float(sum(cost[i, j] for i, j in pairs))


def _check_pairs(pairs):
    if not pairs:
        raise InputError("empty matching")


def mean_angle_endmembers(F_est, F_true, pairs):
    """Mean angle in degrees between matched endmember rows."""
    _check_pairs(pairs)
    F_est = np.atleast_2d(np.asarray(F_est, float))
    F_true = np.atleast_2d(np.asarray(F_true, float))
    i, j = map(list, zip(*pairs))
    return float(np.mean(np.diag(_angles(F_est[i], F_true[j]))))


def mean_angle_abundances(S_est, S_true, pairs):
    """Mean angle in degrees between matched abundance columns."""
    _check_pairs(pairs)
    S_est = np.asarray(S_est, float)
    S_true = np.asarray(S_true, float)
    i, j = map(list, zip(*pairs))
    return float(np.mean(np.diag(_angles(S_est[:, i].T, S_true[:, j].T))))


def sid(p, q, floor=SID_FLOOR):
    """Spectral information divergence of two spectra (symmetric KL of L1-normalised vectors)."""
    p = np.maximum(np.asarray(p, float), 0.0)
    q = np.maximum(np.asarray(q, float), 0.0)
    p = np.maximum(p / max(p.sum(), floor), floor)
    q = np.maximum(q / max(q.sum(), floor), floor)
    return float(np.sum(p * np.log(p / q)) + np.sum(q * np.log(q / p)))


def mean_sid(F_est, F_true, pairs):
    """Mean SID over matched endmember pairs."""
    _check_pairs(pairs)
    F_est = np.atleast_2d(np.asarray(F_est, float))
    F_true = np.atleast_2d(np.asarray(F_true, float))
    return float(np.mean([sid(F_est[i], F_true[j]) for i, j in pairs]))


def rmse_over_runs(values):
    """Root mean square over Monte Carlo runs."""
    v = np.asarray(list(values), float)
    if v.size == 0:
        raise InputError("no runs to aggregate")
    return float(np.sqrt(np.mean(v * v)))


def dimensionality_scores(k_estimates, k_true):
    """Fraction of runs with the right ``K`` and the RMSE of ``K``.

    Returns
    -------
    tuple of float
        ``(accuracy, rmse_K)``
    """
    k = np.asarray(list(k_estimates), float)
    if k.size == 0:
        raise InputError("no estimates given")
    return float(np.mean(k == k_true)), float(np.sqrt(np.mean((k - k_true) ** 2)))


@dataclass
class EvalReport:
    """Metrics of one unmixing run against ground truth (angles in degrees)."""

    theta_F: float
    theta_S: float
    mean_sid: float
    K_true: int
    K_est: int
    matching: list = field(default_factory=list)

    @property
    def accuracy(self):
        return float(self.K_est == self.K_true)

    def as_dict(self):
        d = asdict(self)
        d["matching"] = [list(p) for p in self.matching]
        d["accuracy"] = self.accuracy
        return d


def evaluate(F_est, S_est, F_true, S_true):
    """Match endmembers by angle, then score endmembers, abundances and SID."""
    F_est = np.atleast_2d(np.asarray(F_est, float))
    F_true = np.atleast_2d(np.asarray(F_true, float))
    pairs = match_endmembers(F_est, F_true)
    return EvalReport(
        theta_F=mean_angle_endmembers(F_est, F_true, pairs),
        theta_S=mean_angle_abundances(S_est, S_true, pairs),
        mean_sid=mean_sid(F_est, F_true, pairs),
        K_true=F_true.shape[0],
        K_est=F_est.shape[0],
        matching=pairs,
    )
