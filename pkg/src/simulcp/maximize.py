"""Coordinate ascent on the posterior of Z.

Each step maximizes exactly over one move family (a row, or a block of a row;
a column; an adjacent column swap) with everything else held fixed, so the
log joint never decreases.  ``map_estimate`` repeats full sweeps until nothing
changes.
"""

from __future__ import annotations

import warnings

import numpy as np
from numba import njit

from .likelihood import LikelihoodSpec, seg_lm
from .prior import PriorMoments
from .sampler import (_block_end, _build_links, _colsum, _members, _next_table,
                      _prepare, _row_prior_logs, _swap_log_lik_delta, _apply_swap,
                      _check_Z, column_neighbors)

SWAP_TOL = 1e-10


class MapIterationWarning(RuntimeWarning):
    """The fixed-point loop hit its iteration cap before converging."""


# --------------------------------------------------------------------------
# rows

@njit(cache=True, _nrt=False)
def _row_block_argmax(ctx, Z, j, lo, hi, r, s_end, logc, log1mc, M, bp):
    """Best configuration of row ``j`` on ``lo..hi-1`` given the rest of the row.

    ``M[t - lo]`` is the best log score of the data from ``t`` to ``s_end - 1``
    with a change at ``t``; ``bp`` holds the next change (-1 for none).  Slot
    ``hi - lo`` belongs to the anchor segment starting at ``r``.
    """
    for step in range(hi - lo + 1):
        # positions right to left, then the anchor (stored in slot hi - lo)
        t = hi - 1 - step if step < hi - lo else hi
        start = lo if t == hi else t + 1
        a = r if t == hi else t
        best = -np.inf
        arg = -1
        acc = 0.0
        for s in range(start, hi):
            if acc == -np.inf:
                break
            v = acc + logc[s] + seg_lm(ctx, j, a, s) + M[s - lo]
            if v > best:
                best = v
                arg = s
            acc += log1mc[s]
        if acc > -np.inf:
            v = acc + seg_lm(ctx, j, a, s_end)
            if v > best or arg == -1:
                best = v
                arg = -1
        M[t - lo] = best
        bp[t - lo] = arg
    for t in range(lo, hi):
        Z[j, t] = 0
    nx = bp[hi - lo]
    while nx >= 0:
        Z[j, nx] = 1
        nx = bp[nx - lo]


@njit(cache=True)
def _maximize_row(ctx, Z, colsum, j, log_f, log_g, block, logc, log1mc, M, bp):
    T = Z.shape[1]
    if T < 2:
        return
    _row_prior_logs(Z, colsum, j, log_f, log_g, logc, log1mc)
    nxt_at = np.empty(T + 1, dtype=np.int64)
    nx = T
    nxt_at[T] = T
    for t in range(T - 1, -1, -1):
        if Z[j, t]:
            nx = t
        nxt_at[t] = nx
    r = 0
    lo = 1
    while lo < T:
        hi = _block_end(lo, block, T)
        s_end = nxt_at[hi]
        for t in range(lo, hi):
            colsum[t] -= Z[j, t]
        _row_block_argmax(ctx, Z, j, lo, hi, r, s_end, logc, log1mc, M, bp)
        for t in range(lo, hi):
            colsum[t] += Z[j, t]
            if Z[j, t]:
                r = t
        lo = hi


@njit(cache=True)
def _row_max_sweep(ctx, Z, colsum, log_f, log_g, block):
    J, T = Z.shape
    width = T if block <= 0 else min(block, T)
    logc = np.empty(T)
    log1mc = np.empty(T)
    M = np.empty(width + 2)
    bp = np.empty(width + 2, dtype=np.int64)
    for j in range(J):
        _maximize_row(ctx, Z, colsum, j, log_f, log_g, block, logc, log1mc, M, bp)


# --------------------------------------------------------------------------
# columns

@njit(cache=True)
def _best_count(lr, log_f):
    """Stable descending order of ``lr`` and the count k maximizing the top-k
    sum plus log f(k); ties go to the smaller k."""
    order = np.argsort(-lr, kind="mergesort")
    best = log_f[0]
    kbest = 0
    acc = 0.0
    for k in range(1, lr.shape[0] + 1):
        acc += lr[order[k - 1]]
        v = acc + log_f[k]
        if v > best:
            best = v
            kbest = k
    return order, kbest


def column_argmax(lr, log_f):
    """Rows switched on by the column maximization for log likelihood ratios
    ``lr`` and log prior table ``log_f``, as a 0/1 vector."""
    lr = np.asarray(lr, dtype=np.float64)
    order, k = _best_count(lr, np.asarray(log_f, dtype=np.float64))
    out = np.zeros(lr.shape[0], dtype=np.int8)
    out[order[:k]] = 1
    return out


@njit(cache=True)
def _maximize_column(ctx, Z, colsum, t, prev, nxt_t, log_f, lr):
    J = Z.shape[0]
    for j in range(J):
        r = prev[j]
        s = nxt_t[j]
        lr[j] = seg_lm(ctx, j, r, t) + seg_lm(ctx, j, t, s) - seg_lm(ctx, j, r, s)
    order, kbest = _best_count(lr, log_f)
    for j in range(J):
        Z[j, t] = 0
    for k in range(kbest):
        Z[order[k], t] = 1
    colsum[t] = kbest


@njit(cache=True)
def _column_max_sweep(ctx, Z, colsum, log_f):
    J, T = Z.shape
    nxt = _next_table(Z)
    prev = np.zeros(J, dtype=np.int64)
    lr = np.empty(J)
    for t in range(1, T):
        _maximize_column(ctx, Z, colsum, t, prev, nxt[:, t], log_f, lr)
        for j in range(J):
            if Z[j, t]:
                prev[j] = t


# --------------------------------------------------------------------------
# swaps

@njit(cache=True)
def _swap_climb(ctx, Z, colsum, tol, max_passes):
    """Ascending passes over adjacent pairs, taking every strict improvement."""
    T = Z.shape[1]
    n_acc = 0
    if T < 3:
        return n_acc
    prevcp, nextcp = _build_links(Z)
    members, colpos, nmem = _members(colsum)
    for _ in range(max_passes):
        changed = False
        for t in range(1, T - 1):
            if colsum[t] == 0 and colsum[t + 1] == 0:
                continue
            d = _swap_log_lik_delta(ctx, Z, t, t + 1, prevcp, nextcp)
            if d > tol:
                _apply_swap(Z, colsum, t, t + 1, prevcp, nextcp, members, colpos, nmem)
                n_acc += 1
                changed = True
        if not changed:
            break
    return n_acc


# --------------------------------------------------------------------------
# public API

def maximize_row(j, Z, X, moments: PriorMoments, spec: LikelihoodSpec, block_size=None):
    """Replace row ``j`` of ``Z`` (in place) by its conditional argmax.

    With ``block_size`` the row is maximized one block at a time, each block
    given the rest of the row, which is not guaranteed to reach the row optimum.
    """
    data = _prepare(X, spec)
    _check_Z(Z, data)
    T = Z.shape[1]
    block = 0 if not block_size else int(block_size)
    width = T if block <= 0 else min(block, T)
    _maximize_row(data.ctx(spec), Z, _colsum(Z), int(j), moments.log_f, moments.log_g,
                  block, np.empty(T), np.empty(T), np.empty(width + 2),
                  np.empty(width + 2, dtype=np.int64))
    return Z


def maximize_row_blocked(j, Z, X, moments: PriorMoments, spec: LikelihoodSpec, block_size=50):
    return maximize_row(j, Z, X, moments, spec, block_size=block_size)


def maximize_column(t, Z, X, moments: PriorMoments, spec: LikelihoodSpec):
    """Replace column ``t`` of ``Z`` (in place) by its conditional argmax.

    The best column with k changes takes the k largest likelihood ratios, so
    only J + 1 candidates need scoring; ties go to the smaller k.
    """
    data = _prepare(X, spec)
    _check_Z(Z, data)
    J, T = Z.shape
    if not 1 <= t < T:
        raise ValueError(f"column index must satisfy 1 <= t < {T}, got {t}")
    prev, nxt_t = column_neighbors(Z, t)
    _maximize_column(data.ctx(spec), Z, _colsum(Z), int(t), prev, nxt_t, moments.log_f,
                     np.empty(J))
    return Z


def swap_hill_climb(Z, X, moments: PriorMoments, spec: LikelihoodSpec, tol=SWAP_TOL,
                    max_passes=10_000):
    """Swap adjacent columns while the likelihood strictly improves; in place.

    Returns the number of swaps made.  The prior term is unchanged by a swap.
    """
    data = _prepare(X, spec)
    _check_Z(Z, data)
    return int(_swap_climb(data.ctx(spec), Z, _colsum(Z), float(tol), int(max_passes)))


def map_estimate(Z_init, X, moments: PriorMoments, spec: LikelihoodSpec, block_size=50,
                 max_iter=100):
    """Iterate row, column and swap maximization until a full pass changes nothing.

    Returns a new matrix; warns with :class:`MapIterationWarning` if
    ``max_iter`` passes were not enough.
    """
    data = _prepare(X, spec)
    Z = np.array(Z_init, dtype=np.int8, copy=True)
    _check_Z(Z, data)
    ctx = data.ctx(spec)
    block = 0 if not block_size else int(block_size)
    for _ in range(max_iter):
        before = Z.copy()
        colsum = _colsum(Z)
        _row_max_sweep(ctx, Z, colsum, moments.log_f, moments.log_g, block)
        _column_max_sweep(ctx, Z, colsum, moments.log_f)
        _swap_climb(ctx, Z, colsum, SWAP_TOL, 10_000)
        if np.array_equal(before, Z):
            return Z
    warnings.warn(f"MAP coordinate ascent did not converge in {max_iter} iterations",
                  MapIterationWarning, stacklevel=2)
    return Z


def round_marginals(marginal, threshold=0.5):
    """Starting point for :func:`map_estimate`: 1 where the marginal is >= threshold."""
    Z = (np.asarray(marginal) >= threshold).astype(np.int8)
    Z[:, 0] = 0
    return Z


__all__ = ["maximize_row", "maximize_row_blocked", "maximize_column", "column_argmax",
           "swap_hill_climb",
           "map_estimate", "round_marginals", "MapIterationWarning"]
