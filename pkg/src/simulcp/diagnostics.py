"""Error metrics against a known truth and per-iteration error traces."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .pipeline import RunConfig, run


def changepoint_error(Z, Z_true) -> int:
    """Number of entries where the estimate and the truth disagree (0-1 error)."""
    return int(np.sum(np.asarray(Z) != np.asarray(Z_true)))


def relative_changepoint_error(Z, Z_true) -> float:
    """0-1 error divided by the number of true changepoints."""
    n = int(np.sum(Z_true))
    if n == 0:
        raise ValueError("truth has no changepoints")
    return changepoint_error(Z, Z_true) / n


def relative_position_error(Z, Z_true) -> float:
    """0-1 error over positions with a change in any sequence, divided by the
    number of such true positions."""
    est = np.asarray(Z).any(axis=0)
    true = np.asarray(Z_true).any(axis=0)
    if not true.any():
        raise ValueError("truth has no changepoints")
    return float(np.sum(est != true)) / float(true.sum())


def marginal_squared_error(marginal, Z_true) -> float:
    return float(np.sum((np.asarray(marginal) - np.asarray(Z_true)) ** 2))


def theta_squared_error(theta_mean, theta_true) -> float:
    return float(np.sum((np.asarray(theta_mean) - np.asarray(theta_true)) ** 2))


def error_trace(X, Z_true, config: RunConfig, Z_init=None, chain=0) -> np.ndarray:
    """Relative changepoint error of one chain after every iteration of a run
    (burn-in then sampling).  MAP estimation is skipped."""
    trace = []

    def record(phase, it, c, Z):
        if c == chain:
            trace.append(relative_changepoint_error(Z, Z_true))

    run(X, replace(config, run_map=False), Z_init=Z_init, callback=record)
    return np.array(trace)


def equilibrium_band(trace, discard=0, width=2.0):
    """(mean, lower, upper) of ``trace[discard:]`` with a +-width sd band."""
    tail = np.asarray(trace, dtype=np.float64)[discard:]
    m = float(tail.mean())
    sd = float(tail.std(ddof=1)) if tail.size > 1 else 0.0
    return m, m - width * sd, m + width * sd
