"""Joint probability of data and changepoints, and the generative process."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .likelihood import LikelihoodSpec, SegmentData, seg_lm
from .prior import ChangepointPrior, PriorMoments, log_prior_Z


def as_change_matrix(Z, shape=None) -> np.ndarray:
    """Copy ``Z`` to an int8 matrix, checking entries and the fixed first column."""
    Z = np.array(Z, dtype=np.int8, copy=True)
    if Z.ndim != 2:
        raise ValueError(f"changepoint matrix must be 2-D, got shape {Z.shape}")
    if shape is not None and Z.shape != tuple(shape):
        raise ValueError(f"changepoint matrix has shape {Z.shape}, expected {tuple(shape)}")
    if np.any((Z != 0) & (Z != 1)):
        raise ValueError("changepoint matrix entries must be 0 or 1")
    if np.any(Z[:, 0] != 0):
        raise ValueError("column 0 of the changepoint matrix must be zero")
    return Z


@njit(cache=True)
def _log_lik_Z(ctx, Z):
    J, T = Z.shape
    total = 0.0
    for j in range(J):
        a = 0
        for t in range(1, T):
            if Z[j, t]:
                total += seg_lm(ctx, j, a, t)
                a = t
        total += seg_lm(ctx, j, a, T)
    return total


@njit(cache=True)
def _row_log_lik(ctx, Z, j):
    T = Z.shape[1]
    total = 0.0
    a = 0
    for t in range(1, T):
        if Z[j, t]:
            total += seg_lm(ctx, j, a, t)
            a = t
    return total + seg_lm(ctx, j, a, T)


def log_likelihood_Z(data: SegmentData, Z, spec: LikelihoodSpec) -> float:
    """log P(X | Z): the sum of segment log marginals over all rows."""
    Z = as_change_matrix(Z, data.shape)
    return float(_log_lik_Z(data.ctx(spec), Z))


def _segment_data(X, spec):
    if isinstance(X, SegmentData):
        return X
    return SegmentData(np.asarray(X, dtype=np.float64), spec.family)


def log_joint(X, Z, spec: LikelihoodSpec, moments: PriorMoments) -> float:
    """log P(X, Z) with q and theta integrated out.

    ``X`` may be a raw matrix or a prepared :class:`SegmentData`.
    """
    data = _segment_data(X, spec)
    lp = log_prior_Z(Z, moments)
    if lp == -np.inf:
        return -np.inf
    return log_likelihood_Z(data, Z, spec) + lp


@dataclass
class SyntheticData:
    X: np.ndarray
    Z: np.ndarray
    q: np.ndarray
    theta: np.ndarray


def sample_theta(spec: LikelihoodSpec, rng, size):
    """Draw segment parameters from the conjugate prior.

    Returns ``(primary, extra)`` where ``primary`` is the reported parameter
    (mean, variance, rate, success probability or scale) and ``extra`` holds
    the variance for ``normal-meanvar`` (None otherwise).
    """
    p = spec.params
    fam = spec.family
    if fam == "normal-mean":
        return rng.normal(p["mu0"], np.sqrt(p["sigma2"] / p["lam"]), size), None
    if fam == "normal-var":
        return 1.0 / rng.gamma(p["alpha"], 1.0 / p["beta"], size), None
    if fam == "normal-meanvar":
        var = 1.0 / rng.gamma(p["alpha"], 1.0 / p["beta"], size)
        return rng.normal(p["mu0"], np.sqrt(var / p["lam"])), var
    if fam == "poisson":
        return rng.gamma(p["alpha"], 1.0 / p["beta"], size), None
    if fam == "bernoulli":
        return rng.beta(p["alpha"], p["beta"], size), None
    return 1.0 / rng.gamma(p["alpha"], 1.0 / p["beta"], size), None


def sample_observations(spec: LikelihoodSpec, theta, extra, rng):
    fam = spec.family
    if fam == "normal-mean":
        return rng.normal(theta, np.sqrt(spec.params["sigma2"]))
    if fam == "normal-var":
        return rng.normal(spec.params["mu0"], np.sqrt(theta))
    if fam == "normal-meanvar":
        return rng.normal(theta, np.sqrt(extra))
    if fam == "poisson":
        return rng.poisson(theta).astype(np.float64)
    if fam == "bernoulli":
        return (rng.random(theta.shape) < theta).astype(np.float64)
    return rng.laplace(0.0, theta)


def generate_synthetic(J: int, T: int, prior: ChangepointPrior, spec: LikelihoodSpec,
                       seed=None) -> SyntheticData:
    """Draw (X, Z, q, theta) from the hierarchical model.

    ``q[0]`` is nan since position 0 never carries a changepoint.  ``seed`` may
    be an int or a ``numpy.random.Generator``.
    """
    rng = np.random.default_rng(seed)
    q = np.full(T, np.nan)
    q[1:] = prior.sample_q(rng, T - 1)
    Z = np.zeros((J, T), dtype=np.int8)
    Z[:, 1:] = rng.random((J, T - 1)) < q[None, 1:]
    seg_id = np.cumsum(Z, axis=1)
    n_seg = seg_id[:, -1] + 1
    theta = np.empty((J, T))
    extra = np.empty((J, T)) if spec.family == "normal-meanvar" else None
    for j in range(J):
        prim, ext = sample_theta(spec, rng, int(n_seg[j]))
        theta[j] = prim[seg_id[j]]
        if extra is not None:
            extra[j] = ext[seg_id[j]]
    X = sample_observations(spec, theta, extra, rng)
    return SyntheticData(X=X, Z=Z, q=q, theta=theta)
