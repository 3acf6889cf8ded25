"""Empirical-Bayes updates of the changepoint prior weights and of eta.

The Monte Carlo M-step splits in two independent problems:

* weights: minimize KL(mu_bar || mu_pi) over the simplex, where mu_bar is the
  empirical distribution of column change counts and mu_pi the count
  distribution implied by the prior.  Solved by a multiplicative fixed-point
  iteration that never increases the divergence.
* eta: maximize the summed log marginal of every sampled segment, a
  low-dimensional smooth problem handed to a derivative-free trust-region
  optimizer in log-parameter space.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .likelihood import (FAMILY_PARAMS, POSITIVE_PARAMS, LikelihoodError, LikelihoodSpec,
                         SegmentData, log_marginal_sum, validate_data)
from .prior import ChangepointPrior, PriorError, init_weights, log_binom

__all__ = [
    "MCEMStatistics", "MCEMSchedule", "collect_statistics", "update_weights",
    "weight_iterations", "kl_divergence", "update_eta", "eta_objective", "init_weights",
    "init_eta", "mcem_step", "MCEMWarning",
]

LAMBDA_CAP = 1e6
SHAPE_CAP = 1e6
VAR_FLOOR = 1e-12
INIT_BLOCK = 100


class MCEMWarning(RuntimeWarning):
    """A degenerate estimate was clamped or an optimizer result was rejected."""


# --------------------------------------------------------------------------
# E-step statistics

@dataclass
class MCEMStatistics:
    """Sufficient statistics of a batch of sampled changepoint matrices.

    ``counts[m, l]`` is the number of positions t >= 1 of sample m with exactly
    l changes.  Segments are deduplicated across samples: ``seg_n``, ``seg_s1``,
    ``seg_s2`` and ``seg_shift`` describe each distinct (row, start, end) and
    ``seg_weight`` says how many times it occurred.
    """

    counts: np.ndarray
    seg_n: np.ndarray
    seg_s1: np.ndarray
    seg_s2: np.ndarray
    seg_shift: np.ndarray
    seg_weight: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.counts.shape[0]

    @property
    def mu_bar(self) -> np.ndarray:
        tot = self.counts.sum()
        if tot == 0:
            raise ValueError("no positions t >= 1: change-count distribution undefined")
        return self.counts.sum(axis=0) / tot


def collect_statistics(samples, data: SegmentData) -> MCEMStatistics:
    """Column-count histograms and segment statistics of ``samples``."""
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one sample")
    J, T = data.shape
    counts = np.zeros((len(samples), J + 1), dtype=np.int64)
    keys = []
    for m, Z in enumerate(samples):
        Z = np.asarray(Z)
        if Z.shape != (J, T):
            raise ValueError(f"sample {m} has shape {Z.shape}, expected {(J, T)}")
        counts[m] = np.bincount(Z[:, 1:].sum(axis=0), minlength=J + 1)
        for j in range(J):
            cps = np.flatnonzero(Z[j, 1:]) + 1
            starts = np.concatenate(([0], cps))
            ends = np.concatenate((cps, [T]))
            keys.append((j * (T + 1) + starts) * (T + 1) + ends)
    uniq, weight = np.unique(np.concatenate(keys), return_counts=True)
    ends = uniq % (T + 1)
    starts = (uniq // (T + 1)) % (T + 1)
    rows = uniq // ((T + 1) * (T + 1))
    s1 = data.P1[rows, ends] - data.P1[rows, starts]
    s2 = data.P2[rows, ends] - data.P2[rows, starts]
    return MCEMStatistics(counts, (ends - starts).astype(np.int64), s1, s2,
                          data.shift[rows], weight.astype(np.float64))


# --------------------------------------------------------------------------
# weights

def _scaled_moments(prior: ChangepointPrior, J: int) -> np.ndarray:
    # each column rescaled by its largest entry; the update is invariant to this
    logm = prior.atom_log_moments(J)
    top = logm.max(axis=0)
    top[np.isneginf(top)] = 0.0
    return np.exp(logm - top)


def kl_divergence(mu_bar, prior: ChangepointPrior) -> float:
    """KL(mu_bar || mu_pi) with mu_pi(l) = C(J, l) E[q^l (1-q)^(J-l)]."""
    mu_bar = np.asarray(mu_bar, dtype=np.float64)
    J = mu_bar.shape[0] - 1
    logm = prior.atom_log_moments(J)
    logw = np.log(prior.weights, where=prior.weights > 0,
                  out=np.full(prior.weights.shape, -np.inf))
    log_mu = log_binom(J) + logsumexp(logw[:, None] + logm, axis=0)
    pos = mu_bar > 0
    if np.any(np.isneginf(log_mu[pos])):
        return np.inf
    return float(np.sum(mu_bar[pos] * (np.log(mu_bar[pos]) - log_mu[pos])))


def weight_iterations(mu_bar, prior: ChangepointPrior, max_iter=1000):
    """Yield successive weight vectors of the multiplicative KL update."""
    mu_bar = np.asarray(mu_bar, dtype=np.float64)
    w = np.array(prior.weights, dtype=np.float64)
    if np.any(w <= 0):
        raise PriorError("weight update needs a start with every atom strictly positive")
    M = _scaled_moments(prior, mu_bar.shape[0] - 1)
    pos = mu_bar > 0
    for _ in range(max_iter):
        mix = w @ M
        ratio = np.zeros_like(mu_bar)
        ok = pos & (mix > 0)
        ratio[ok] = mu_bar[ok] / mix[ok]
        w = w * (M @ ratio)
        w /= w.sum()
        yield w


def update_weights(mu_bar, prior: ChangepointPrior, tol=1e-8, max_iter=1000) -> ChangepointPrior:
    """Weights minimizing KL(mu_bar || mu_pi) over the fixed dictionary.

    Iterates until no weight moves by more than ``tol`` or ``max_iter`` steps.
    """
    w_prev = np.array(prior.weights)
    w = w_prev
    for w in weight_iterations(mu_bar, prior, max_iter):
        if np.max(np.abs(w - w_prev)) < tol:
            break
        w_prev = w
    return prior.with_weights(w / w.sum())


# --------------------------------------------------------------------------
# eta

def eta_objective(spec: LikelihoodSpec, stats: MCEMStatistics) -> float:
    """Sum over sampled segments of their log marginal under ``spec``."""
    return log_marginal_sum(spec, stats.seg_n, stats.seg_s1, stats.seg_s2,
                            stats.seg_shift, stats.seg_weight)


def _to_free(spec: LikelihoodSpec) -> np.ndarray:
    x = spec.eta_array().copy()
    pos = list(POSITIVE_PARAMS[spec.family])
    x[pos] = np.log(x[pos])
    return x


def _from_free(family: str, x) -> np.ndarray:
    eta = np.array(x, dtype=np.float64)
    pos = list(POSITIVE_PARAMS[family])
    eta[pos] = np.exp(eta[pos])
    return eta


def update_eta(stats: MCEMStatistics, spec: LikelihoodSpec, max_evals=200, rtol=1e-6,
               fixed=()) -> LikelihoodSpec:
    """Maximize :func:`eta_objective` starting from ``spec.eta``.

    Positive parameters are optimized on the log scale.  Names listed in
    ``fixed`` are held at their current values.  If the optimizer ends below
    the starting objective the start is kept and :class:`MCEMWarning` raised.
    """
    if stats.seg_n.size == 0:
        raise ValueError("need at least one segment")
    family = spec.family
    names = FAMILY_PARAMS[family]
    unknown = set(fixed) - set(names)
    if unknown:
        raise LikelihoodError(f"{family} has no parameters {sorted(unknown)}")
    free_idx = [i for i, n in enumerate(names) if n not in fixed]
    x_start = _to_free(spec)
    start_val = eta_objective(spec, stats)
    if not free_idx:
        return spec
    scale = max(abs(start_val), 1.0)

    def neg(y):
        x = x_start.copy()
        x[free_idx] = y
        try:
            val = eta_objective(spec.with_eta(_from_free(family, x)), stats)
        except LikelihoodError:
            return np.inf
        return -val / scale if np.isfinite(val) else np.inf

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize(neg, x_start[free_idx], method="COBYQA",
                       options={"maxfev": max_evals, "final_tr_radius": rtol,
                                "initial_tr_radius": 0.5})
    x = x_start.copy()
    x[free_idx] = res.x
    try:
        new = spec.with_eta(_from_free(family, x))
        new_val = eta_objective(new, stats)
    except LikelihoodError:
        new_val = -np.inf
    if not new_val >= start_val:
        warnings.warn(f"eta update did not improve the objective ({res.message}); keeping "
                      "the previous eta", MCEMWarning, stacklevel=2)
        return spec
    return new


# --------------------------------------------------------------------------
# initialization

def _blocks(row, size):
    return [row[i:i + size] for i in range(0, row.shape[0], size)]


def _block_moments(X, size):
    means, variances = [], []
    for row in X:
        for b in _blocks(row, size):
            means.append(b.mean())
            if b.shape[0] > 1:
                variances.append(b.var(ddof=1))
    return np.array(means), np.array(variances)


def _clamp_warn(what):
    warnings.warn(f"degenerate moments while initializing {what}; clamped", MCEMWarning,
                  stacklevel=3)


def _ratio_capped(num, den, cap, what):
    if den > 0 and num / den <= cap:
        return num / den
    _clamp_warn(what)
    return cap


def _inv_gamma_match(values, what):
    """(alpha, beta) with inverse-Gamma mean and variance equal to those of ``values``."""
    m = max(float(np.mean(values)), VAR_FLOOR) if values.size else 1.0
    v = float(np.var(values, ddof=1)) if values.size > 1 else 0.0
    alpha = 2.0 + _ratio_capped(m * m, v, SHAPE_CAP, what)
    return alpha, m * (alpha - 1.0)


def init_eta(X, family: str, block=INIT_BLOCK) -> LikelihoodSpec:
    """Moment-matched starting hyperparameters from blocks of ``block`` points.

    Each row is cut into consecutive blocks (the last may be short); block
    means and variances are matched to their prior moments.
    """
    X = validate_data(X, family)
    means, variances = _block_moments(X, block)
    mu0 = float(means.mean())
    vm = float(np.var(means, ddof=1)) if means.size > 1 else 0.0
    if family in ("normal-mean", "normal-meanvar"):
        s2 = max(float(variances.mean()) if variances.size else 0.0, VAR_FLOOR)
        lam = _ratio_capped(s2, vm, LAMBDA_CAP, "lambda")
        if family == "normal-mean":
            return LikelihoodSpec(family, (mu0, lam, s2))
        return LikelihoodSpec(family, (mu0, lam, 2.0, s2))
    if family == "normal-var":
        if variances.size == 0:
            variances = np.array([VAR_FLOOR])
        alpha, beta = _inv_gamma_match(variances, "alpha")
        return LikelihoodSpec(family, (mu0, alpha, beta))
    if family == "laplace-scale":
        scales = np.array([np.abs(b).mean() for row in X for b in _blocks(row, block)])
        alpha, beta = _inv_gamma_match(scales, "alpha")
        return LikelihoodSpec(family, (alpha, beta))
    if family == "poisson":
        m = max(mu0, VAR_FLOOR)
        beta = _ratio_capped(m, vm, LAMBDA_CAP, "beta")
        return LikelihoodSpec(family, (m * beta, beta))
    # bernoulli
    m = min(max(mu0, 1e-6), 1.0 - 1e-6)
    conc = _ratio_capped(m * (1.0 - m), vm, LAMBDA_CAP, "concentration")
    conc = max(conc - 1.0, 1e-6)
    return LikelihoodSpec(family, (m * conc, (1.0 - m) * conc))


# --------------------------------------------------------------------------
# schedule and M-step

DEFAULT_SCHEDULE = (10, 20, 40, 60, 100)
SHORT_SCHEDULE = (5, 10, 20, 30, 50)


@dataclass(frozen=True)
class MCEMSchedule:
    """Burn-in iterations (1-based, counted after the iteration completes) at
    which an M-step runs; each uses the samples drawn since the previous one."""

    update_at: tuple[int, ...] = DEFAULT_SCHEDULE

    def __post_init__(self):
        u = tuple(int(i) for i in self.update_at)
        if any(i < 1 for i in u) or any(b <= a for a, b in zip(u, u[1:])):
            raise ValueError(f"schedule must be strictly increasing positive integers: {u}")
        object.__setattr__(self, "update_at", u)

    @classmethod
    def for_burnin(cls, burnin: int) -> "MCEMSchedule":
        if burnin == 50:
            return cls(SHORT_SCHEDULE)
        return cls(tuple(i for i in DEFAULT_SCHEDULE if i <= burnin))

    def validate(self, burnin: int):
        if self.update_at and self.update_at[-1] > burnin:
            raise ValueError(
                f"MCEM update at iteration {self.update_at[-1]} beyond burn-in {burnin}")


@dataclass
class MStepResult:
    prior: ChangepointPrior
    spec: LikelihoodSpec
    kl: float
    eta_objective: float
    n_samples: int
    notes: list = field(default_factory=list)


def mcem_step(prior: ChangepointPrior, spec: LikelihoodSpec, samples, data: SegmentData,
              fix_eta=()) -> MStepResult:
    """One Monte Carlo M-step: new weights and eta from ``samples``."""
    stats = collect_statistics(samples, data)
    mu_bar = stats.mu_bar
    w = np.array(prior.weights)
    if np.any(w <= 0):
        # an earlier update may have underflowed a weight; the iteration needs full support
        w = np.maximum(w, 1e-300)
        prior = prior.with_weights(w / w.sum())
    new_prior = update_weights(mu_bar, prior)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", MCEMWarning)
        new_spec = update_eta(stats, spec, fixed=fix_eta)
    for w in caught:
        warnings.warn(w.message, w.category, stacklevel=2)
    return MStepResult(new_prior, new_spec, kl_divergence(mu_bar, new_prior),
                       eta_objective(new_spec, stats), stats.n_samples,
                       [str(w.message) for w in caught])
