"""Exact-conditional MCMC over the changepoint matrix.

One iteration is a sweep of row-wise Gibbs updates (each row drawn from its
full conditional by a forward-backward recursion, optionally block by
block), a sweep of column-wise Gibbs updates (a polynomial-coefficient
recursion over the other sequences), and a batch of Metropolis-Hastings moves
that swap adjacent columns.

Conventions: ``Z`` is an int8 J x T matrix, positions are 0-based, ``Z[:, 0]``
is always zero, and a segment ``[a, b)`` covers positions ``a..b-1``.  All
randomness comes from uniform buffers drawn from a ``numpy.random.Generator``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .likelihood import LikelihoodSpec, SegmentData, _lm, seg_lm
from .prior import PriorMoments

NEG_INF = -np.inf


@dataclass(frozen=True)
class SamplerConfig:
    """Per-iteration settings.

    ``block_size`` of None or 0 samples each row in one piece; ``swaps`` of
    None means ten proposals per position.
    """

    block_size: int | None = 50
    swaps: int | None = None
    prune_tol: float = 1e-12

    def n_swaps(self, T: int) -> int:
        return 10 * T if self.swaps is None else int(self.swaps)

    def block(self) -> int:
        return 0 if not self.block_size else int(self.block_size)


# --------------------------------------------------------------------------
# small numeric helpers

@njit(cache=True, _nrt=False)
def _lae(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True, _nrt=False)
def _lse(buf, k):
    m = -np.inf
    for i in range(k):
        if buf[i] > m:
            m = buf[i]
    if m == -np.inf:
        return m
    s = 0.0
    for i in range(k):
        s += math.exp(buf[i] - m)
    return m + math.log(s)


@njit(cache=True)
def _colsum(Z):
    J, T = Z.shape
    out = np.zeros(T, dtype=np.int64)
    for j in range(J):
        for t in range(1, T):
            out[t] += Z[j, t]
    return out


@njit(cache=True)
def _next_table(Z):
    """nxt[j, t] = smallest s > t with Z[j, s] = 1, else T."""
    J, T = Z.shape
    nxt = np.empty((J, T + 1), dtype=np.int64)
    for j in range(J):
        nx = T
        nxt[j, T] = T
        for t in range(T - 1, -1, -1):
            nxt[j, t] = nx
            if Z[j, t]:
                nx = t
    return nxt


# --------------------------------------------------------------------------
# row updates

@njit(cache=True, _nrt=False)
def _row_prior_logs(Z, colsum, j, log_f, log_g, logc, log1mc):
    """log c_j(t) and log(1 - c_j(t)), with 1 - c = f(N) / g(N + 1)."""
    T = Z.shape[1]
    logc[0] = -np.inf
    log1mc[0] = 0.0
    for t in range(1, T):
        n = colsum[t] - Z[j, t]
        lg = log_g[n + 1]
        if lg == -np.inf:
            logc[t] = -np.inf
            log1mc[t] = 0.0
        else:
            logc[t] = log_f[n + 1] - lg
            log1mc[t] = log_f[n] - lg


@njit(cache=True, _nrt=False)
def _row_block_backward(ctx, j, lo, hi, r, s_end, logc, log1mc, Q, buf):
    """Backward pass over block ``lo..hi-1``.

    ``Q[t - lo]`` is the log density of the data from ``t`` to ``s_end - 1``
    given a change at ``t``; ``Q[hi - lo]`` is the same for the anchor segment
    starting at ``r`` with no change forced inside the block.
    """
    for t in range(hi - 1, lo - 1, -1):
        k = 0
        acc = 0.0
        for s in range(t + 1, hi):
            if acc == -np.inf:
                break
            buf[k] = acc + logc[s] + seg_lm(ctx, j, t, s) + Q[s - lo]
            k += 1
            acc += log1mc[s]
        if acc > -np.inf:
            buf[k] = acc + seg_lm(ctx, j, t, s_end)
            k += 1
        Q[t - lo] = _lse(buf, k)
    k = 0
    acc = 0.0
    for s in range(lo, hi):
        if acc == -np.inf:
            break
        buf[k] = acc + logc[s] + seg_lm(ctx, j, r, s) + Q[s - lo]
        k += 1
        acc += log1mc[s]
    if acc > -np.inf:
        buf[k] = acc + seg_lm(ctx, j, r, s_end)
        k += 1
    Q[hi - lo] = _lse(buf, k)


@njit(cache=True, _nrt=False)
def _next_cp_logw(ctx, j, cur, t, acc, logc, Qt, cur_q):
    """log P(next change at t | current change at cur, none in between)."""
    return acc + logc[t] + seg_lm(ctx, j, cur, t) + Qt - cur_q


@njit(cache=True, _nrt=False)
def _row_block_forward(ctx, Z, j, lo, hi, r, s_end, logc, log1mc, Q, u, upos):
    """Draw the changepoints of row ``j`` inside ``lo..hi-1`` left to right."""
    for t in range(lo, hi):
        Z[j, t] = 0
    cur = r
    cur_q = Q[hi - lo]
    start = lo
    while start < hi:
        x = u[upos]
        upos += 1
        cum = 0.0
        acc = 0.0
        chosen = -1
        for t in range(start, hi):
            if acc == -np.inf:
                break
            cum += math.exp(_next_cp_logw(ctx, j, cur, t, acc, logc, Q[t - lo], cur_q))
            if x < cum:
                chosen = t
                break
            acc += log1mc[t]
        if chosen < 0:
            break
        Z[j, chosen] = 1
        cur = chosen
        cur_q = Q[chosen - lo]
        start = chosen + 1
    return upos


@njit(cache=True, _nrt=False)
def _block_end(lo, block, T):
    if block <= 0:
        return T
    hi = (lo // block + 1) * block
    return hi if hi < T else T


@njit(cache=True)
def _resample_row(ctx, Z, colsum, j, log_f, log_g, block, u, upos, logc, log1mc, Q, buf):
    T = Z.shape[1]
    if T < 2:
        return upos
    _row_prior_logs(Z, colsum, j, log_f, log_g, logc, log1mc)
    # next changepoint at or after each position, from the row before the update;
    # blocks to the right of the current one are untouched when it is read
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
        _row_block_backward(ctx, j, lo, hi, r, s_end, logc, log1mc, Q, buf)
        upos = _row_block_forward(ctx, Z, j, lo, hi, r, s_end, logc, log1mc, Q, u, upos)
        for t in range(lo, hi):
            colsum[t] += Z[j, t]
            if Z[j, t]:
                r = t
        lo = hi
    return upos


@njit(cache=True)
def _row_sweep(ctx, Z, colsum, log_f, log_g, block, u, upos):
    J, T = Z.shape
    logc = np.empty(T)
    log1mc = np.empty(T)
    width = T if block <= 0 else min(block, T)
    Q = np.empty(width + 2)
    buf = np.empty(width + 2)
    for j in range(J):
        upos = _resample_row(ctx, Z, colsum, j, log_f, log_g, block, u, upos,
                             logc, log1mc, Q, buf)
    return upos


def row_uniforms(J: int, T: int, block: int) -> int:
    n_blocks = 1 if block <= 0 else T // block + 1
    return J * (T + n_blocks + 1)


@njit(cache=True)
def _row_step_table(ctx, Z, colsum, j, log_f, log_g, block):
    """Forward-step distributions of every block of row ``j`` (diagnostic).

    Row ``i`` of the result is the distribution of the next change given the
    current one at ``cur[i]``: columns ``0..T-1`` for a change at that
    position, column ``T`` for no further change inside the block.
    """
    T = Z.shape[1]
    logc = np.empty(T)
    log1mc = np.empty(T)
    _row_prior_logs(Z, colsum, j, log_f, log_g, logc, log1mc)
    width = T if block <= 0 else min(block, T)
    Q = np.empty(width + 2)
    buf = np.empty(width + 2)
    nxt_at = np.empty(T + 1, dtype=np.int64)
    nx = T
    nxt_at[T] = T
    for t in range(T - 1, -1, -1):
        if Z[j, t]:
            nx = t
        nxt_at[t] = nx
    out = np.zeros((2 * T, T + 1))
    cur_of = np.full(2 * T, -1, dtype=np.int64)
    n = 0
    lo = 1
    while lo < T:
        hi = _block_end(lo, block, T)
        s_end = nxt_at[hi]
        r = 0
        for t in range(lo - 1, 0, -1):
            if Z[j, t]:
                r = t
                break
        _row_block_backward(ctx, j, lo, hi, r, s_end, logc, log1mc, Q, buf)
        for c in range(lo - 1, hi):
            cur = r if c == lo - 1 else c
            cur_q = Q[hi - lo] if c == lo - 1 else Q[c - lo]
            acc = 0.0
            for t in range(c + 1 if c >= lo else lo, hi):
                if acc == -np.inf:
                    break
                out[n, t] = math.exp(_next_cp_logw(ctx, j, cur, t, acc, logc, Q[t - lo], cur_q))
                acc += log1mc[t]
            if acc > -np.inf:
                out[n, T] = math.exp(acc + seg_lm(ctx, j, cur, s_end) - cur_q)
            cur_of[n] = cur
            n += 1
        lo = hi
    return out[:n], cur_of[:n]


# --------------------------------------------------------------------------
# column updates

@njit(cache=True, _nrt=False)
def _ensure_R(R, depth, lr, j, K):
    """Make rows ``j..J-1`` of the log coefficient table hold at least
    ``min(K, degree + 1)`` entries.  Row i holds log e_k(rho_{i+1..J-1})."""
    J = R.shape[0]
    for i in range(J - 1, j - 1, -1):
        need = K if K < J - i else J - i
        if depth[i] >= need:
            continue
        for k in range(depth[i], need):
            if i == J - 1:
                R[i, k] = 0.0
                continue
            a = R[i + 1, k] if k < J - i - 1 else -np.inf
            b = lr[i + 1] + R[i + 1, k - 1] if k >= 1 else -np.inf
            R[i, k] = _lae(a, b)
        depth[i] = need


@njit(cache=True, _nrt=False)
def _column_sums(R, depth, lr, j, N, log_f, fsuf, log_tol):
    """(log sum_k R f(N+k+1), log sum_k R f(N+k)) for sequence ``j``.

    The sums stop once the remaining tail is provably below ``tol`` times the
    smaller partial sum: past the mode, the log-concave coefficients decay at
    least geometrically with ratio R(k+1)/R(k).
    """
    J = R.shape[0]
    deg = J - 1 - j
    num1 = -np.inf
    num0 = -np.inf
    chunk = 4
    for k in range(deg + 1):
        if k + 1 >= depth[j] and depth[j] < deg + 1:
            chunk = 2 * chunk
            _ensure_R(R, depth, lr, j, k + 1 + chunk)
        rk = R[j, k]
        if rk == -np.inf:
            break
        num1 = _lae(num1, rk + log_f[N + k + 1])
        num0 = _lae(num0, rk + log_f[N + k])
        if log_tol > -np.inf and k < deg:
            rr = R[j, k + 1] - rk
            if rr < 0.0:
                lo_sum = num1 if num1 < num0 else num0
                if lo_sum > -np.inf:
                    bound = rk + rr - math.log1p(-math.exp(rr)) + fsuf[N + k + 1]
                    if bound < log_tol + lo_sum:
                        break
    return num1, num0


@njit(cache=True, _nrt=False)
def _column_log_ratios(ctx, t, prev, nxt_t, lr):
    J = lr.shape[0]
    for j in range(J):
        r = prev[j]
        s = nxt_t[j]
        lr[j] = seg_lm(ctx, j, r, t) + seg_lm(ctx, j, t, s) - seg_lm(ctx, j, r, s)


@njit(cache=True, _nrt=False)
def _resample_column(ctx, Z, colsum, t, prev, nxt_t, log_f, fsuf, log_tol, u, upos,
                     lr, R, depth):
    J = Z.shape[0]
    _column_log_ratios(ctx, t, prev, nxt_t, lr)
    for i in range(J):
        depth[i] = 0
    N = 0
    for j in range(J):
        num1, num0 = _column_sums(R, depth, lr, j, N, log_f, fsuf, log_tol)
        a = lr[j] + num1
        tot = _lae(a, num0)
        z = 0
        if tot > -np.inf:
            z = 1 if u[upos] < math.exp(a - tot) else 0
        upos += 1
        Z[j, t] = z
        N += z
    colsum[t] = N
    return upos


@njit(cache=True)
def _column_sweep(ctx, Z, colsum, log_f, fsuf, log_tol, u, upos):
    J, T = Z.shape
    nxt = _next_table(Z)
    prev = np.zeros(J, dtype=np.int64)
    lr = np.empty(J)
    R = np.empty((J, J + 1))
    depth = np.zeros(J, dtype=np.int64)
    for t in range(1, T):
        upos = _resample_column(ctx, Z, colsum, t, prev, nxt[:, t], log_f, fsuf,
                                log_tol, u, upos, lr, R, depth)
        for j in range(J):
            if Z[j, t]:
                prev[j] = t
    return upos


def _suffix_max(log_f):
    return np.maximum.accumulate(log_f[::-1])[::-1].copy()


# --------------------------------------------------------------------------
# column swaps

@njit(cache=True)
def _build_links(Z):
    """Doubly linked lists of changepoints per row; 0 is the head, T the tail."""
    J, T = Z.shape
    prevcp = np.zeros((J, T + 1), dtype=np.int64)
    nextcp = np.zeros((J, T + 1), dtype=np.int64)
    for j in range(J):
        last = 0
        for t in range(1, T):
            if Z[j, t]:
                prevcp[j, t] = last
                nextcp[j, last] = t
                last = t
        nextcp[j, last] = T
        prevcp[j, T] = last
    return prevcp, nextcp


@njit(cache=True, _nrt=False)
def _swap_log_lik_delta(ctx, Z, t, tp, prevcp, nextcp):
    """log P(X | Z with columns t, tp swapped) - log P(X | Z) for adjacent t, tp."""
    J = Z.shape[0]
    out = 0.0
    for j in range(J):
        zt = Z[j, t]
        if zt == Z[j, tp]:
            continue
        if zt:
            c = t
            new = tp
        else:
            c = tp
            new = t
        r = prevcp[j, c]
        s = nextcp[j, c]
        out += (seg_lm(ctx, j, r, new) + seg_lm(ctx, j, new, s)
                - seg_lm(ctx, j, r, c) - seg_lm(ctx, j, c, s))
    return out


@njit(cache=True, _nrt=False)
def _direction_prob(e, T):
    if e == 1 or e == T - 1:
        return 1.0
    return 0.5


@njit(cache=True, _nrt=False)
def _swap_log_correction(colsum, t, tp, T):
    """log of q(Z~ -> Z) / q(Z -> Z~) for the adjacent-column swap proposal.

    Either endpoint with at least one change can propose the swap; in the
    swapped state the column counts trade places.
    """
    fwd = 0.0
    rev = 0.0
    if colsum[t] > 0:
        fwd += _direction_prob(t, T)
    if colsum[tp] > 0:
        fwd += _direction_prob(tp, T)
    if colsum[tp] > 0:
        rev += _direction_prob(t, T)
    if colsum[t] > 0:
        rev += _direction_prob(tp, T)
    return math.log(rev / fwd)


@njit(cache=True, _nrt=False)
def _apply_swap(Z, colsum, t, tp, prevcp, nextcp, members, colpos, nmem):
    J = Z.shape[0]
    for j in range(J):
        zt = Z[j, t]
        if zt == Z[j, tp]:
            continue
        if zt:
            c = t
            new = tp
        else:
            c = tp
            new = t
        p = prevcp[j, c]
        n = nextcp[j, c]
        prevcp[j, new] = p
        nextcp[j, new] = n
        nextcp[j, p] = new
        prevcp[j, n] = new
        Z[j, c] = 0
        Z[j, new] = 1
    ct = colsum[t]
    ctp = colsum[tp]
    colsum[t] = ctp
    colsum[tp] = ct
    if ct > 0 and ctp == 0:
        i = colpos[t]
        members[i] = tp
        colpos[tp] = i
        colpos[t] = -1
    elif ctp > 0 and ct == 0:
        i = colpos[tp]
        members[i] = t
        colpos[t] = i
        colpos[tp] = -1
    return nmem


@njit(cache=True)
def _members(colsum):
    T = colsum.shape[0]
    members = np.empty(T, dtype=np.int64)
    colpos = np.full(T, -1, dtype=np.int64)
    nmem = 0
    for t in range(1, T):
        if colsum[t] > 0:
            members[nmem] = t
            colpos[t] = nmem
            nmem += 1
    return members, colpos, nmem


@njit(cache=True)
def _swap_sweep(ctx, Z, colsum, n_swaps, u, upos):
    T = Z.shape[1]
    accepted = 0
    if T < 3:
        return upos + 3 * n_swaps, 0
    prevcp, nextcp = _build_links(Z)
    members, colpos, nmem = _members(colsum)
    for _ in range(n_swaps):
        x0 = u[upos]
        x1 = u[upos + 1]
        x2 = u[upos + 2]
        upos += 3
        if nmem == 0:
            continue
        i = int(x0 * nmem)
        if i >= nmem:
            i = nmem - 1
        t = members[i]
        if t == 1:
            tp = 2
        elif t == T - 1:
            tp = T - 2
        else:
            tp = t - 1 if x1 < 0.5 else t + 1
        log_a = (_swap_log_lik_delta(ctx, Z, t, tp, prevcp, nextcp)
                 + _swap_log_correction(colsum, t, tp, T))
        if log_a >= 0.0 or x2 < math.exp(log_a):
            _apply_swap(Z, colsum, t, tp, prevcp, nextcp, members, colpos, nmem)
            accepted += 1
    return upos, accepted


# --------------------------------------------------------------------------
# naive single-site baseline

@njit(cache=True, _nrt=False)
def _site_log_prob(ctx, Z, colsum, j, t, r, s, log_f):
    """log P(Z[j, t] = 1 | everything else), or nan if both states are impossible."""
    n = colsum[t] - Z[j, t]
    lr = seg_lm(ctx, j, r, t) + seg_lm(ctx, j, t, s) - seg_lm(ctx, j, r, s)
    a = lr + log_f[n + 1]
    tot = _lae(a, log_f[n])
    if tot == -np.inf:
        return np.nan
    return a - tot


@njit(cache=True)
def _naive_sweep(ctx, Z, colsum, log_f, u, upos):
    """Single-site Gibbs over every free entry, row by row.

    Row-major order keeps each site's neighbouring changepoints and prefix
    sums in cache; any fixed scan order leaves the posterior invariant.  The
    merged-segment term only changes when a neighbour moves, so it is cached.
    """
    fam, eta, ntab, P1, P2, shift = ctx
    J, T = Z.shape
    nxt = np.empty(T + 1, dtype=np.int64)
    for j in range(J):
        sh = shift[j]
        nx = T
        nxt[T] = T
        for t in range(T - 1, -1, -1):
            nxt[t] = nx
            if Z[j, t]:
                nx = t
        r = 0
        s_prev = -1
        r_prev = -1
        whole = 0.0
        for t in range(1, T):
            s = nxt[t]
            if s != s_prev or r != r_prev:
                n = s - r
                whole = _lm(fam, eta, ntab[n], n, P1[j, s] - P1[j, r], P2[j, s] - P2[j, r], sh)
                s_prev = s
                r_prev = r
            n = t - r
            left = _lm(fam, eta, ntab[n], n, P1[j, t] - P1[j, r], P2[j, t] - P2[j, r], sh)
            n = s - t
            right = _lm(fam, eta, ntab[n], n, P1[j, s] - P1[j, t], P2[j, s] - P2[j, t], sh)
            k = colsum[t] - Z[j, t]
            # log odds of a change; nan only when both states are impossible
            odds = left + right - whole + log_f[k + 1] - log_f[k]
            x = u[upos]
            upos += 1
            if odds == odds:
                z = 1 if x * (1.0 + math.exp(-odds)) < 1.0 else 0
                colsum[t] += z - Z[j, t]
                Z[j, t] = z
            if Z[j, t]:
                r = t
    return upos


# --------------------------------------------------------------------------
# public API

def _prepare(X, spec: LikelihoodSpec) -> SegmentData:
    if isinstance(X, SegmentData):
        return X
    return SegmentData(np.asarray(X, dtype=np.float64), spec.family)


def _rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def _check_Z(Z, data):
    if not (isinstance(Z, np.ndarray) and Z.dtype == np.int8):
        raise TypeError("Z must be an int8 numpy array (see model.as_change_matrix)")
    if Z.shape != data.shape:
        raise ValueError(f"Z has shape {Z.shape}, data has shape {data.shape}")


def resample_row(j, Z, X, moments: PriorMoments, spec: LikelihoodSpec, rng, block_size=None):
    """Redraw row ``j`` of ``Z`` in place from its conditional given the other rows.

    With ``block_size`` set, each block is drawn from its conditional given the
    rest of the row, one block after another.
    """
    data = _prepare(X, spec)
    _check_Z(Z, data)
    rng = _rng(rng)
    J, T = Z.shape
    block = 0 if not block_size else int(block_size)
    width = T if block <= 0 else min(block, T)
    u = rng.random(row_uniforms(1, T, block))
    _resample_row(data.ctx(spec), Z, _colsum(Z), int(j), moments.log_f, moments.log_g,
                  block, u, 0, np.empty(T), np.empty(T), np.empty(width + 2),
                  np.empty(width + 2))
    return Z


def resample_column(t, Z, X, moments: PriorMoments, spec: LikelihoodSpec, rng,
                    prune_tol=1e-12):
    """Redraw column ``t`` (1 <= t < T) of ``Z`` in place from its conditional."""
    data = _prepare(X, spec)
    _check_Z(Z, data)
    J, T = Z.shape
    if not 1 <= t < T:
        raise ValueError(f"column index must satisfy 1 <= t < {T}, got {t}")
    rng = _rng(rng)
    prev, nxt_t = column_neighbors(Z, t)
    u = rng.random(J)
    log_tol = math.log(prune_tol) if prune_tol > 0 else -np.inf
    _resample_column(data.ctx(spec), Z, _colsum(Z), int(t), prev, nxt_t, moments.log_f,
                     _suffix_max(moments.log_f), log_tol, u, 0, np.empty(J),
                     np.empty((J, J + 1)), np.zeros(J, dtype=np.int64))
    return Z


def row_step_distributions(j, Z, X, moments: PriorMoments, spec: LikelihoodSpec,
                           block_size=None):
    """Forward-sampling distributions used by :func:`resample_row` (diagnostic).

    Returns ``(probs, anchors)``: one row per possible current changepoint in
    each block, with the probability of each next change position followed
    by the probability of no further change in the block.  Each row sums to 1.
    """
    data = _prepare(X, spec)
    _check_Z(Z, data)
    block = 0 if not block_size else int(block_size)
    probs, cur = _row_step_table(data.ctx(spec), Z, _colsum(Z), int(j), moments.log_f,
                                 moments.log_g, block)
    return probs, cur


def row_change_probs(j, Z, moments: PriorMoments) -> np.ndarray:
    """c_j(t): prior change probability of row ``j`` at each position given
    the other rows (entry 0 is 0)."""
    T = Z.shape[1]
    logc = np.empty(T)
    log1mc = np.empty(T)
    _row_prior_logs(np.asarray(Z, dtype=np.int8), _colsum(np.asarray(Z, dtype=np.int8)), int(j),
                    moments.log_f, moments.log_g, logc, log1mc)
    return np.exp(logc)


def column_change_probs(t, Z, X, moments: PriorMoments, spec: LikelihoodSpec,
                        prune_tol=1e-12) -> np.ndarray:
    """c_t(j) for the sequential column draw: the prior probability of a change
    in row ``j`` given the current entries of rows ``0..j-1`` at ``t`` and
    the likelihood of rows ``j+1..J-1``."""
    data = _prepare(X, spec)
    J, T = Z.shape
    prev, nxt_t = column_neighbors(Z, t)
    lr = np.empty(J)
    _column_log_ratios(data.ctx(spec), int(t), prev, nxt_t, lr)
    R = np.empty((J, J + 1))
    depth = np.zeros(J, dtype=np.int64)
    fsuf = _suffix_max(moments.log_f)
    log_tol = math.log(prune_tol) if prune_tol > 0 else -np.inf
    out = np.empty(J)
    N = 0
    for j in range(J):
        num1, num0 = _column_sums(R, depth, lr, j, N, moments.log_f, fsuf, log_tol)
        out[j] = math.exp(num1 - np.logaddexp(num1, num0)) if np.logaddexp(num1, num0) > -np.inf \
            else 0.0
        N += int(Z[j, t])
    return out


def column_log_coefficients(t, Z, X, spec: LikelihoodSpec) -> np.ndarray:
    """Full J x (J+1) table of log elementary symmetric polynomials of the
    likelihood ratios of rows j+1..J-1 (diagnostic; -inf past each degree)."""
    data = _prepare(X, spec)
    J, T = Z.shape
    prev, nxt_t = column_neighbors(Z, t)
    lr = np.empty(J)
    _column_log_ratios(data.ctx(spec), int(t), prev, nxt_t, lr)
    R = np.full((J, J + 1), -np.inf)
    depth = np.zeros(J, dtype=np.int64)
    _ensure_R(R, depth, lr, 0, J + 1)
    return R


def column_neighbors(Z, t):
    """Previous (or 0) and next (or T) changepoint of every row around ``t``."""
    J, T = Z.shape
    prev = np.zeros(J, dtype=np.int64)
    nxt = np.full(J, T, dtype=np.int64)
    for j in range(J):
        left = np.flatnonzero(Z[j, 1:t]) + 1
        right = np.flatnonzero(Z[j, t + 1:]) + t + 1
        if left.size:
            prev[j] = left[-1]
        if right.size:
            nxt[j] = right[0]
    return prev, nxt


def mh_swap_sweep(Z, X, moments: PriorMoments, spec: LikelihoodSpec, n_swaps, rng):
    """Run ``n_swaps`` adjacent-column swap proposals in place; returns the
    number accepted.  The prior term cancels because a swap only permutes
    column counts."""
    data = _prepare(X, spec)
    _check_Z(Z, data)
    if n_swaps < 0:
        raise ValueError("number of swaps must be non-negative")
    rng = _rng(rng)
    u = rng.random(3 * int(n_swaps))
    _, acc = _swap_sweep(data.ctx(spec), Z, _colsum(Z), int(n_swaps), u, 0)
    return int(acc)


def swap_log_ratio(Z, X, spec: LikelihoodSpec, t, tp):
    """log P(X | Z~) - log P(X | Z) for swapping adjacent columns ``t``, ``tp``."""
    data = _prepare(X, spec)
    prevcp, nextcp = _build_links(np.asarray(Z, dtype=np.int8))
    return float(_swap_log_lik_delta(data.ctx(spec), np.asarray(Z, dtype=np.int8),
                                     int(t), int(tp), prevcp, nextcp))


def swap_acceptance_log_ratio(Z, X, spec: LikelihoodSpec, t, tp):
    """Full MH log acceptance ratio (likelihood ratio plus proposal correction)."""
    Z = np.asarray(Z, dtype=np.int8)
    return swap_log_ratio(Z, X, spec, t, tp) + float(
        _swap_log_correction(_colsum(Z), int(t), int(tp), Z.shape[1]))


def naive_site_prob(j, t, Z, X, moments: PriorMoments, spec: LikelihoodSpec):
    """P(Z[j, t] = 1 | X, all other entries)."""
    data = _prepare(X, spec)
    prev, nxt = column_neighbors(Z, t)
    lp = _site_log_prob(data.ctx(spec), Z, _colsum(Z), int(j), int(t), int(prev[j]),
                        int(nxt[j]), moments.log_f)
    assert lp == lp, "both values of the site have zero probability"
    return math.exp(lp)


def naive_gibbs_site(j, t, Z, X, moments: PriorMoments, spec: LikelihoodSpec, rng):
    """Redraw the single entry ``Z[j, t]`` from its conditional, in place."""
    if t < 1:
        raise ValueError("column 0 is fixed")
    p = naive_site_prob(j, t, Z, X, moments, spec)
    Z[j, t] = 1 if _rng(rng).random() < p else 0
    return Z


def naive_gibbs_sweep(Z, X, moments: PriorMoments, spec: LikelihoodSpec, rng, sweeps=1):
    """``sweeps`` passes of single-site Gibbs over every free entry, in place."""
    data = _prepare(X, spec)
    _check_Z(Z, data)
    rng = _rng(rng)
    ctx = data.ctx(spec)
    colsum = _colsum(Z)
    J, T = Z.shape
    for _ in range(sweeps):
        u = rng.random(J * T)
        _naive_sweep(ctx, Z, colsum, moments.log_f, u, 0)
    return Z


class Kernel:
    """Cached state for repeated iterations on one data set and one prior.

    Rebuild (or call :meth:`update`) whenever the prior or eta changes.
    """

    def __init__(self, data: SegmentData, moments: PriorMoments, spec: LikelihoodSpec,
                 config: SamplerConfig = SamplerConfig()):
        self.data = data
        self.config = config
        self.update(moments, spec)

    def update(self, moments: PriorMoments, spec: LikelihoodSpec):
        self.moments = moments
        self.spec = spec
        self.ctx = self.data.ctx(spec)
        self.fsuf = _suffix_max(moments.log_f)

    def iterate(self, Z, rng):
        """One full iteration (rows, columns, swaps) in place; returns swaps accepted."""
        J, T = Z.shape
        cfg = self.config
        block = cfg.block()
        log_tol = math.log(cfg.prune_tol) if cfg.prune_tol > 0 else -np.inf
        n_sw = cfg.n_swaps(T)
        colsum = _colsum(Z)
        m = self.moments
        u = rng.random(row_uniforms(J, T, block))
        _row_sweep(self.ctx, Z, colsum, m.log_f, m.log_g, block, u, 0)
        u = rng.random(J * T)
        _column_sweep(self.ctx, Z, colsum, m.log_f, self.fsuf, log_tol, u, 0)
        u = rng.random(3 * n_sw)
        _, acc = _swap_sweep(self.ctx, Z, colsum, n_sw, u, 0)
        return int(acc)

    def row_sweep(self, Z, rng):
        J, T = Z.shape
        block = self.config.block()
        u = rng.random(row_uniforms(J, T, block))
        _row_sweep(self.ctx, Z, _colsum(Z), self.moments.log_f, self.moments.log_g,
                   block, u, 0)

    def column_sweep(self, Z, rng):
        J, T = Z.shape
        tol = self.config.prune_tol
        u = rng.random(J * T)
        _column_sweep(self.ctx, Z, _colsum(Z), self.moments.log_f, self.fsuf,
                      math.log(tol) if tol > 0 else -np.inf, u, 0)

    def naive_sweeps(self, Z, rng, sweeps=1):
        J, T = Z.shape
        colsum = _colsum(Z)
        for _ in range(sweeps):
            u = rng.random(J * T)
            _naive_sweep(self.ctx, Z, colsum, self.moments.log_f, u, 0)


def mcmc_iteration(Z, X, moments: PriorMoments, spec: LikelihoodSpec, rng,
                   config: SamplerConfig = SamplerConfig()):
    """Rows j = 0..J-1, then columns t = 1..T-1, then the swap batch; in place."""
    data = _prepare(X, spec)
    _check_Z(Z, data)
    Kernel(data, moments, spec, config).iterate(Z, _rng(rng))
    return Z
