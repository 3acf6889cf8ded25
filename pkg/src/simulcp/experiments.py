"""Simulation protocols: the nine-sequence small example under true, wrong and
MCEM-selected priors, and the naive-versus-blocked convergence study."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diagnostics import (changepoint_error, equilibrium_band, error_trace,
                          marginal_squared_error, theta_squared_error)
from .likelihood import LikelihoodSpec
from .model import generate_synthetic
from .pipeline import RunConfig, run
from .prior import ChangepointPrior

# Normal(mu, 1) data, mu ~ Normal(0, 5), shared change probability 0 or 2/9.
SMALL_J, SMALL_T = 9, 100
SMALL_TRUE_SPEC = LikelihoodSpec("normal-mean", (0.0, 0.2, 1.0))
SMALL_TRUE_PRIOR = ChangepointPrior.point_masses([0.0, 2 / 9], [0.9, 0.1])
# mu ~ Normal(0, 10) with sigma^2 = 10, flat over five atoms
SMALL_WRONG_SPEC = LikelihoodSpec("normal-mean", (0.0, 1.0, 10.0))
SMALL_WRONG_PRIOR = ChangepointPrior.point_masses([0, 1 / 9, 2 / 9, 3 / 9, 4 / 9], [0.2] * 5)
SMALL_SCHEDULE = (5, 10, 20, 30, 50)


@dataclass
class SmallExampleErrors:
    marginal_sq: float
    theta_sq: float
    map_01: int


def small_example_replicate(seed: int, burnin=50, samples=50) -> dict[str, SmallExampleErrors]:
    """Errors of the three prior settings on one simulated data set."""
    syn = generate_synthetic(SMALL_J, SMALL_T, SMALL_TRUE_PRIOR, SMALL_TRUE_SPEC, seed)
    settings = {
        "true": (SMALL_TRUE_PRIOR, SMALL_TRUE_SPEC, ()),
        "wrong": (SMALL_WRONG_PRIOR, SMALL_WRONG_SPEC, ()),
        "mcem": (SMALL_WRONG_PRIOR, SMALL_WRONG_SPEC, SMALL_SCHEDULE),
    }
    out = {}
    for i, (name, (prior, spec, schedule)) in enumerate(settings.items()):
        cfg = RunConfig(family="normal-mean", eta=spec.eta, prior=prior, burnin=burnin,
                        samples=samples, schedule=schedule, seed=seed * 10 + i)
        s = run(syn.X, cfg)
        out[name] = SmallExampleErrors(marginal_squared_error(s.marginal, syn.Z),
                                       theta_squared_error(s.theta_mean, syn.theta),
                                       changepoint_error(s.map_Z, syn.Z))
    return out


# Long-sequence convergence study: J=50, T=10000, rare shared changes.
LONG_J, LONG_T = 50, 10_000
LONG_SPEC = LikelihoodSpec("normal-mean", (0.0, 1.0, 1.0))
LONG_PRIOR = ChangepointPrior.point_masses([0.0, 0.4], [0.995, 0.005])
LONG_SCHEDULE = (5, 10, 20, 30, 50)


def long_dataset(seed=0):
    return generate_synthetic(LONG_J, LONG_T, LONG_PRIOR, LONG_SPEC, seed)


def blocked_equilibrium(syn, iterations=20, seed=0, discard=5, width=2.0):
    """(mean, lower, upper) of the blocked sampler's relative changepoint error
    when started at the truth under the true priors."""
    cfg = RunConfig(family="normal-mean", eta=LONG_SPEC.eta, prior=LONG_PRIOR, burnin=0,
                    samples=iterations, schedule=(), seed=seed, run_map=False)
    trace = error_trace(syn.X, syn.Z, cfg, Z_init=syn.Z)
    return equilibrium_band(trace, discard=discard, width=width)


def naive_trace(syn, seed, iterations=200, sweeps=30):
    """Relative changepoint error of the naive single-site sampler started at
    zero with data-driven initial priors and MCEM during the first 50 iterations."""
    cfg = RunConfig(family="normal-mean", burnin=50, samples=iterations - 50,
                    schedule=LONG_SCHEDULE, seed=seed, sampler="naive", naive_sweeps=sweeps,
                    run_map=False)
    return error_trace(syn.X, syn.Z, cfg)
