"""Simultaneous changepoint detection across aligned sequences with shared
per-position change probabilities."""

__version__ = "0.1.0"

from .likelihood import FAMILIES, LikelihoodError, LikelihoodSpec, SegmentData
from .prior import BetaAtom, ChangepointPrior, PointMass, PriorError, init_weights
from .model import generate_synthetic, log_joint
from .sampler import Kernel, SamplerConfig, mcmc_iteration
from .maximize import map_estimate
from .oracle import enumerate_posterior
from .mcem import mcem_step
from .pipeline import PosteriorSummary, RunConfig, run

__all__ = [
    "FAMILIES", "LikelihoodError", "LikelihoodSpec", "SegmentData", "BetaAtom",
    "ChangepointPrior", "PointMass", "PriorError", "init_weights", "generate_synthetic",
    "log_joint", "Kernel", "SamplerConfig", "mcmc_iteration", "map_estimate",
    "enumerate_posterior", "mcem_step", "PosteriorSummary", "RunConfig", "run",
]
