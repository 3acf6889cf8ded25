"""Exact posterior by exhaustive enumeration, for tiny instances.

All 2^(J(T-1)) changepoint matrices are visited in Gray-code order, so each
step flips one entry and only the affected row code and column count change.
Row likelihoods are tabulated once per row over its 2^(T-1) configurations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .likelihood import LikelihoodSpec, SegmentData, seg_lm
from .prior import PriorMoments

MAX_FREE_BITS = 22


class EnumerationTooLarge(ValueError):
    pass


@dataclass
class EnumerationResult:
    log_evidence: float
    marginal: np.ndarray
    map_Z: np.ndarray
    map_log_joint: float
    q_mean: np.ndarray


@njit(cache=True)
def _row_tables(ctx, J, T):
    """table[j, code] = log P(X_j | row j has changes at the set bits of code).

    Bit t - 1 of ``code`` is Z[j, t].
    """
    n = T - 1
    out = np.empty((J, 1 << n))
    for j in range(J):
        for code in range(1 << n):
            a = 0
            tot = 0.0
            for t in range(1, T):
                if (code >> (t - 1)) & 1:
                    tot += seg_lm(ctx, j, a, t)
                    a = t
            out[j, code] = tot + seg_lm(ctx, j, a, T)
    return out


@njit(cache=True)
def _ctz(i):
    k = 0
    while (i & 1) == 0:
        i >>= 1
        k += 1
    return k


@njit(cache=True)
def _enumerate(rows, J, T, log_f, log_eq):
    n = T - 1
    nbits = J * n
    codes = np.zeros(J, dtype=np.int64)
    counts = np.zeros(T, dtype=np.int64)
    total = 1 << nbits

    def score():
        s = 0.0
        for j in range(J):
            s += rows[j, codes[j]]
        for t in range(1, T):
            s += log_f[counts[t]]
        return s

    # pass 1: maximum and argmax
    best = score()
    best_codes = codes.copy()
    for i in range(1, total):
        b = _ctz(i)
        j = b // n
        t = b % n + 1
        bit = 1 << (t - 1)
        if codes[j] & bit:
            counts[t] -= 1
        else:
            counts[t] += 1
        codes[j] ^= bit
        s = score()
        if s > best:
            best = s
            best_codes[:] = codes
    # pass 2: normalized sums (the Gray sequence ends one flip from all-zero)
    codes[:] = 0
    counts[:] = 0
    ev = 0.0
    marg = np.zeros((J, T))
    eq = np.zeros(T)
    for i in range(total):
        if i > 0:
            b = _ctz(i)
            j = b // n
            t = b % n + 1
            bit = 1 << (t - 1)
            if codes[j] & bit:
                counts[t] -= 1
            else:
                counts[t] += 1
            codes[j] ^= bit
        s = score()
        if s == -np.inf:
            continue
        w = np.exp(s - best)
        ev += w
        for jj in range(J):
            c = codes[jj]
            for tt in range(1, T):
                if (c >> (tt - 1)) & 1:
                    marg[jj, tt] += w
        for tt in range(1, T):
            eq[tt] += w * np.exp(log_eq[counts[tt]])
    return best, best_codes, ev, marg, eq


def _check_size(J, T):
    bits = J * (T - 1)
    if bits > MAX_FREE_BITS:
        raise EnumerationTooLarge(
            f"enumeration needs J*(T-1) <= {MAX_FREE_BITS}, got {J}*{T - 1} = {bits}")


def _codes_to_Z(codes, J, T):
    Z = np.zeros((J, T), dtype=np.int8)
    for j in range(J):
        for t in range(1, T):
            Z[j, t] = (int(codes[j]) >> (t - 1)) & 1
    return Z


def _data(X, spec):
    if isinstance(X, SegmentData):
        return X
    return SegmentData(np.asarray(X, dtype=np.float64), spec.family)


def enumerate_posterior(X, moments: PriorMoments, spec: LikelihoodSpec) -> EnumerationResult:
    """Exact evidence, marginals, MAP and E[q_t | X] by full enumeration."""
    data = _data(X, spec)
    J, T = data.shape
    _check_size(J, T)
    if moments.J != J:
        raise ValueError(f"moments built for J={moments.J}, data has J={J}")
    with np.errstate(invalid="ignore"):
        log_eq = moments.log_h - moments.log_f
    rows = _row_tables(data.ctx(spec), J, T)
    best, codes, ev, marg, eq = _enumerate(rows, J, T, moments.log_f, log_eq)
    q_mean = eq / ev
    q_mean[0] = np.nan
    return EnumerationResult(
        log_evidence=float(best + np.log(ev)),
        marginal=marg / ev,
        map_Z=_codes_to_Z(codes, J, T),
        map_log_joint=float(best),
        q_mean=q_mean,
    )


def log_evidence_direct(X, moments: PriorMoments, spec: LikelihoodSpec) -> float:
    """Evidence by a second route: plain binary order with a running
    log-sum-exp, every log joint rebuilt from scratch."""
    data = _data(X, spec)
    J, T = data.shape
    _check_size(J, T)
    rows = _row_tables(data.ctx(spec), J, T)
    return float(_evidence_binary(rows, J, T, moments.log_f))


@njit(cache=True)
def _evidence_binary(rows, J, T, log_f):
    n = T - 1
    total = 1 << (J * n)
    acc = -np.inf
    counts = np.zeros(T, dtype=np.int64)
    for i in range(total):
        s = 0.0
        for t in range(T):
            counts[t] = 0
        for j in range(J):
            c = (i >> (j * n)) & ((1 << n) - 1)
            s += rows[j, c]
            for t in range(1, T):
                counts[t] += (c >> (t - 1)) & 1
        for t in range(1, T):
            s += log_f[counts[t]]
        if s == -np.inf:
            continue
        if acc == -np.inf:
            acc = s
        elif acc > s:
            acc = acc + np.log1p(np.exp(s - acc))
        else:
            acc = s + np.log1p(np.exp(acc - s))
    return acc
