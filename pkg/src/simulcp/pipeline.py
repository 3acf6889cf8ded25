"""End-to-end inference: burn-in with empirical-Bayes updates, sampling,
posterior summaries and a MAP estimate started from the rounded marginals."""

from __future__ import annotations

import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .likelihood import LikelihoodError, LikelihoodSpec, SegmentData
from .maximize import MapIterationWarning, map_estimate, round_marginals
from .mcem import MCEMSchedule, MCEMWarning, init_eta, mcem_step
from .model import as_change_matrix, log_joint
from .prior import ChangepointPrior, PriorError, PriorMoments, init_weights
from .sampler import Kernel, SamplerConfig

SAMPLERS = ("exact", "naive")


@dataclass(frozen=True)
class RunConfig:
    """Settings of one inference run.

    ``eta`` / ``prior`` of None are initialized from the data and the default
    dictionary.  ``schedule`` of None picks the default MCEM update points for
    the burn-in length; an empty tuple disables MCEM.  ``sampler="naive"``
    replaces each iteration by ``naive_sweeps`` single-site Gibbs sweeps.
    """

    family: str = "normal-mean"
    eta: tuple | None = None
    prior: ChangepointPrior | None = None
    burnin: int = 100
    samples: int = 100
    schedule: tuple | None = None
    block_size: int | None = 50
    swaps: int | None = None
    seed: int = 0
    chains: int = 1
    prune_tol: float = 1e-12
    map_block_size: int | None = 50
    map_max_iter: int = 100
    map_threshold: float = 0.5
    fix_eta: tuple = ()
    sampler: str = "exact"
    naive_sweeps: int = 30
    run_map: bool = True

    def __post_init__(self):
        for name in ("burnin", "samples", "map_max_iter", "naive_sweeps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.chains < 1:
            raise ValueError("need at least one chain")
        if self.swaps is not None and self.swaps < 0:
            raise ValueError("swaps must be non-negative")
        if self.block_size is not None and self.block_size < 0:
            raise ValueError("block size must be non-negative")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}")
        self.mcem_schedule().validate(self.burnin)

    def mcem_schedule(self) -> MCEMSchedule:
        if self.schedule is None:
            return MCEMSchedule.for_burnin(self.burnin)
        return MCEMSchedule(tuple(self.schedule))

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(self.block_size, self.swaps, self.prune_tol)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["prior"] = None if self.prior is None else self.prior.to_dict()
        d["eta"] = None if self.eta is None else list(self.eta)
        d["schedule"] = list(self.mcem_schedule().update_at)
        d["fix_eta"] = list(self.fix_eta)
        return d


@dataclass
class PosteriorSummary:
    marginal: np.ndarray | None
    q_mean: np.ndarray | None
    theta_mean: np.ndarray | None
    map_Z: np.ndarray | None
    prior: ChangepointPrior
    spec: LikelihoodSpec
    n_samples: int
    trajectory: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    samples: list | None = None


# --------------------------------------------------------------------------
# summaries of a list of sampled matrices

def marginal_probabilities(samples) -> np.ndarray:
    """Entrywise average of the sampled matrices."""
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one sample")
    acc = np.zeros(np.shape(samples[0]), dtype=np.int64)
    for Z in samples:
        acc += Z
    return acc / len(samples)


def posterior_mean_q(samples, moments: PriorMoments) -> np.ndarray:
    """Rao-Blackwellized E[q_t | X]: the average over samples of E[q_t | N_t].

    Entry 0 is nan since position 0 carries no change probability.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one sample")
    T = np.shape(samples[0])[1]
    with np.errstate(invalid="ignore"):
        log_eq = moments.log_h - moments.log_f
    acc = np.zeros(T - 1)
    for Z in samples:
        N = np.asarray(Z)[:, 1:].sum(axis=0)
        lf = moments.log_f[N]
        assert not np.any(np.isneginf(lf)), "sample has a column count the prior forbids"
        acc += np.exp(log_eq[N])
    out = np.full(T, np.nan)
    out[1:] = acc / len(samples)
    return out


def _segment_theta(spec: LikelihoodSpec, n, s1, s2, shift):
    """Conjugate posterior means for arrays of shifted segment statistics."""
    p = spec.params
    fam = spec.family
    if fam in ("normal-mean", "normal-meanvar"):
        return (p["lam"] * p["mu0"] + s1 + n * shift) / (p["lam"] + n)
    if fam == "normal-var":
        shape = p["alpha"] + 0.5 * n
        if np.any(shape <= 1):
            raise LikelihoodError("normal-var: posterior mean of the variance needs "
                                  "alpha + n/2 > 1")
        d = p["mu0"] - shift
        ss = np.maximum(s2 - 2.0 * d * s1 + n * d * d, 0.0)
        return (p["beta"] + 0.5 * ss) / (shape - 1.0)
    if fam == "poisson":
        return (p["alpha"] + s1) / (p["beta"] + n)
    if fam == "bernoulli":
        return (p["alpha"] + s1) / (p["alpha"] + p["beta"] + n)
    if np.any(p["alpha"] + n <= 1):
        raise LikelihoodError("laplace-scale: posterior mean of the scale needs alpha + n > 1")
    return (p["beta"] + s1) / (p["alpha"] + n - 1.0)


def posterior_mean_theta_matrix(samples, X, spec: LikelihoodSpec) -> np.ndarray:
    """Average over samples of the segment-wise posterior mean of theta."""
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one sample")
    data = X if isinstance(X, SegmentData) else SegmentData(np.asarray(X, float), spec.family)
    J, T = data.shape
    acc = np.zeros((J, T))
    for Z in samples:
        Z = np.asarray(Z)
        for j in range(J):
            cps = np.flatnonzero(Z[j, 1:]) + 1
            a = np.concatenate(([0], cps))
            b = np.concatenate((cps, [T]))
            n = b - a
            vals = _segment_theta(spec, n, data.P1[j, b] - data.P1[j, a],
                                  data.P2[j, b] - data.P2[j, a], data.shift[j])
            acc[j] += np.repeat(vals, n)
    return acc / len(samples)


# --------------------------------------------------------------------------
# the run

def initial_priors(X, config: RunConfig):
    """(prior, spec) to start from, filling in data-driven defaults."""
    J = np.shape(X)[0]
    if config.prior is not None:
        prior = config.prior
    else:
        if J < 2:
            raise PriorError("the default dictionary needs J >= 2; supply a prior for a "
                             "single sequence")
        prior = init_weights(J)
    if config.eta is not None:
        spec = LikelihoodSpec(config.family, tuple(config.eta))
    else:
        spec = init_eta(X, config.family)
    return prior, spec


def run(X, config: RunConfig = RunConfig(), Z_init=None, callback=None,
        keep_samples=False) -> PosteriorSummary:
    """Run burn-in (with scheduled MCEM updates), sampling, summaries and MAP.

    ``callback(phase, iteration, chain, Z)`` is called after every iteration,
    with phase "burnin" or "sample" and 1-based iteration numbers.
    """
    t0 = time.perf_counter()
    caught_all = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", MCEMWarning)
        warnings.simplefilter("always", MapIterationWarning)
        data = SegmentData(np.asarray(X, dtype=np.float64), config.family)
        J, T = data.shape
        prior, spec = initial_priors(data.X, config)
        moments = prior.moments(J)
        kernel = Kernel(data, moments, spec, config.sampler_config())
        streams = [np.random.default_rng(s)
                   for s in np.random.SeedSequence(config.seed).spawn(config.chains)]
        if Z_init is None:
            chains = [np.zeros((J, T), dtype=np.int8) for _ in range(config.chains)]
        else:
            Z0 = as_change_matrix(Z_init, (J, T))
            chains = [Z0.copy() for _ in range(config.chains)]
        schedule = set(config.mcem_schedule().update_at)
        trajectory = []
        diag = {"changes": [[] for _ in chains], "swaps_accepted": [[] for _ in chains]}

        def step(phase, it):
            for c, Z in enumerate(chains):
                if config.sampler == "exact":
                    acc = kernel.iterate(Z, streams[c])
                else:
                    kernel.naive_sweeps(Z, streams[c], config.naive_sweeps)
                    acc = 0
                diag["changes"][c].append(int(Z.sum()))
                diag["swaps_accepted"][c].append(acc)
                if callback is not None:
                    callback(phase, it, c, Z)

        window = []
        t_burn = time.perf_counter()
        for it in range(1, config.burnin + 1):
            step("burnin", it)
            window.extend(Z.copy() for Z in chains)
            if it in schedule:
                res = mcem_step(prior, spec, window, data, fix_eta=config.fix_eta)
                prior, spec = res.prior, res.spec
                moments = prior.moments(J)
                kernel.update(moments, spec)
                trajectory.append({"iteration": it, "weights": [float(w) for w in prior.weights],
                                   "eta": list(spec.eta), "kl": res.kl,
                                   "eta_objective": res.eta_objective,
                                   "window": res.n_samples})
                window = []
        t_samp = time.perf_counter()
        samples = []
        for it in range(1, config.samples + 1):
            step("sample", it)
            samples.extend(Z.copy() for Z in chains)
        t_sum = time.perf_counter()
        summary = PosteriorSummary(None, None, None, None, prior, spec, len(samples),
                                   trajectory, diag)
        if samples:
            summary.marginal = marginal_probabilities(samples)
            summary.q_mean = posterior_mean_q(samples, moments)
            summary.theta_mean = posterior_mean_theta_matrix(samples, data, spec)
            t_map = time.perf_counter()
        if samples and config.run_map:
            summary.map_Z = map_estimate(round_marginals(summary.marginal, config.map_threshold),
                                         data, moments, spec, block_size=config.map_block_size,
                                         max_iter=config.map_max_iter)
            summary.diagnostics["map_log_joint"] = log_joint(data, summary.map_Z, spec, moments)
        if not samples:
            t_map = time.perf_counter()
        t_end = time.perf_counter()
        if keep_samples:
            summary.samples = samples
        summary.diagnostics["pooled_chains"] = config.chains > 1
        summary.timings = {"setup": t_burn - t0, "burnin": t_samp - t_burn,
                           "sampling": t_sum - t_samp, "summaries": t_map - t_sum,
                           "map": t_end - t_map}
        caught_all = [f"{w.category.__name__}: {w.message}" for w in caught]
    summary.warnings = caught_all
    return summary
