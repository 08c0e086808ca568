"""Hot numeric loops: the LSTM recurrence and exact nearest-neighbour search.

Two implementations of the recurrence exist. The vectorised one steps over
time with whole-batch numpy ops and wins for training-size batches, where
numpy's SIMD ``tanh``/``exp`` dominate. The fused one is a scalar loop
compiled by numba and wins for tiny batches (single-sample inference),
where per-call numpy overhead dominates. :func:`lstm_sequence_forward`
picks one by batch size; with ``IDS_DISABLE_NUMBA=1`` only the vectorised
path is used.

Gate layout along the last axis is ``[input, forget, cell, output]``.
"""
import math

import numpy as np

from ._accel import USE_NUMBA, njit

# largest batches routed to the fused kernels (see benchmarks/bench_kernels.py)
FUSED_MAX_BATCH_FORWARD = 2
FUSED_MAX_BATCH_BACKWARD = 8


def lstm_forward_vectorized(xp, U, h0, c0):
    """Run the recurrence over a pre-projected input.

    xp : (T, B, 4H) input projection ``x @ W + b`` laid out time-major.
    U : (H, 4H) recurrent weights.
    Returns hidden states, cell states (both (T, B, H)) and activated gates.
    """
    T, B, G = xp.shape
    H = G // 4
    hs = np.empty((T, B, H))
    cs = np.empty((T, B, H))
    acts = np.empty((T, B, G))
    h = h0
    c = c0
    for t in range(T):
        z = xp[t] + h @ U
        a = acts[t]
        # sigmoid(z) = (1 + tanh(z/2)) / 2 avoids exp overflow
        np.tanh(0.5 * z, out=a)
        a *= 0.5
        a += 0.5
        a[:, 2 * H : 3 * H] = np.tanh(z[:, 2 * H : 3 * H])
        c = a[:, H : 2 * H] * c + a[:, :H] * a[:, 2 * H : 3 * H]
        h = a[:, 3 * H :] * np.tanh(c)
        hs[t] = h
        cs[t] = c
    return hs, cs, acts


def lstm_backward_vectorized(dhs, acts, cs, c0, UT):
    """Backpropagation through time.

    dhs : (T, B, H) upstream gradient for every hidden state.
    UT : (4H, H) transpose of the recurrent weights.
    Returns the gradient w.r.t. the gate pre-activations (T, B, 4H) and the
    gradients w.r.t. the initial hidden and cell states.
    """
    T, B, H = dhs.shape
    dz = np.empty((T, B, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        a = acts[t]
        i = a[:, :H]
        f = a[:, H : 2 * H]
        g = a[:, 2 * H : 3 * H]
        o = a[:, 3 * H :]
        c_prev = cs[t - 1] if t > 0 else c0
        tc = np.tanh(cs[t])
        dh = dhs[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        d = dz[t]
        d[:, :H] = dc * g * i * (1.0 - i)
        d[:, H : 2 * H] = dc * c_prev * f * (1.0 - f)
        d[:, 2 * H : 3 * H] = dc * i * (1.0 - g * g)
        d[:, 3 * H :] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = d @ UT
    return dz, dh_next, dc_next


# Branch-free exp for the fused kernels. numba lowers math.exp/math.tanh to
# scalar libm calls (~10-30 ns each); this form vectorises and stays within
# a few ulp of numpy across the clamped range.
_POW2 = 2.0 ** np.arange(-1022, 1024)
_LN2_HI = 6.93147180369123816490e-01
_LN2_LO = 1.90821492927058770002e-10
_LOG2E = 1.4426950408889634
_FASTMATH = {"contract", "reassoc"}


@njit(fastmath=_FASTMATH, inline="always")
def _exp(x):
    x = min(max(x, -708.0), 709.0)
    n = math.floor(x * _LOG2E + 0.5)
    r = (x - n * _LN2_HI) - n * _LN2_LO
    # degree-13 Taylor polynomial, |r| <= ln2 / 2
    p = 1.0 / 6227020800.0
    p = p * r + 1.0 / 479001600.0
    p = p * r + 1.0 / 39916800.0
    p = p * r + 1.0 / 3628800.0
    p = p * r + 1.0 / 362880.0
    p = p * r + 1.0 / 40320.0
    p = p * r + 1.0 / 5040.0
    p = p * r + 1.0 / 720.0
    p = p * r + 1.0 / 120.0
    p = p * r + 1.0 / 24.0
    p = p * r + 1.0 / 6.0
    p = p * r + 0.5
    p = p * r + 1.0
    p = p * r + 1.0
    return p * _POW2[int(n) + 1022]


@njit(fastmath=_FASTMATH, inline="always")
def _sigmoid(x):
    return 1.0 / (1.0 + _exp(-x))


@njit(fastmath=_FASTMATH, inline="always")
def _tanh(x):
    return 1.0 - 2.0 / (_exp(2.0 * x) + 1.0)


@njit(fastmath=_FASTMATH)
def lstm_forward_fused(xp, UT, h0, c0):
    """Scalar-loop twin of :func:`lstm_forward_vectorized`.

    Takes the transposed recurrent weights ``UT`` (4H, H) so each gate
    pre-activation is a contiguous dot product.
    """
    T, B, G = xp.shape
    H = G // 4
    hs = np.empty((T, B, H))
    cs = np.empty((T, B, H))
    acts = np.empty((T, B, G))
    h = h0.copy()
    c = c0.copy()
    z = np.empty(G)
    e = np.empty(G)
    slope = np.full(G, -1.0)
    alpha = np.zeros(G)
    beta = np.ones(G)
    slope[2 * H : 3 * H] = 2.0
    alpha[2 * H : 3 * H] = 1.0
    beta[2 * H : 3 * H] = -2.0
    for t in range(T):
        for b in range(B):
            hb = h[b]
            cb = c[b]
            for j in range(G):
                row = UT[j]
                acc = 0.0
                for k in range(H):
                    acc += hb[k] * row[k]
                z[j] = acc + xp[t, b, j]
            # one exp pass over all gates: sigmoid(z) = 1 / (1 + e^-z) and
            # tanh(z) = 1 - 2 / (1 + e^2z), so a = alpha + beta / (1 + e^(s z))
            a = acts[t, b]
            for j in range(G):
                e[j] = _exp(slope[j] * z[j])
            for j in range(G):
                a[j] = alpha[j] + beta[j] / (1.0 + e[j])
            for j in range(H):
                cb[j] = a[H + j] * cb[j] + a[j] * a[2 * H + j]
                e[j] = _exp(2.0 * cb[j])
            for j in range(H):
                hb[j] = a[3 * H + j] * (1.0 - 2.0 / (1.0 + e[j]))
            cs[t, b] = cb
            hs[t, b] = hb
    return hs, cs, acts


@njit(fastmath=_FASTMATH)
def lstm_backward_fused(dhs, acts, cs, c0, U):
    """Scalar-loop twin of :func:`lstm_backward_vectorized`; takes ``U`` (H, 4H)."""
    T, B, H = dhs.shape
    G = 4 * H
    dz = np.empty((T, B, G))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        for b in range(B):
            a = acts[t, b]
            d = dz[t, b]
            c_prev = cs[t - 1, b] if t > 0 else c0[b]
            for j in range(H):
                i = a[j]
                f = a[H + j]
                g = a[2 * H + j]
                o = a[3 * H + j]
                tc = _tanh(cs[t, b, j])
                dh = dhs[t, b, j] + dh_next[b, j]
                dc = dc_next[b, j] + dh * o * (1.0 - tc * tc)
                d[j] = dc * g * i * (1.0 - i)
                d[H + j] = dc * c_prev[j] * f * (1.0 - f)
                d[2 * H + j] = dc * i * (1.0 - g * g)
                d[3 * H + j] = dh * tc * o * (1.0 - o)
                dc_next[b, j] = dc * f
            for k in range(H):
                row = U[k]
                acc = 0.0
                for j in range(G):
                    acc += d[j] * row[j]
                dh_next[b, k] = acc
    return dz, dh_next, dc_next


def lstm_sequence_forward(xp, U, h0, c0):
    if USE_NUMBA and xp.shape[1] <= FUSED_MAX_BATCH_FORWARD:
        return lstm_forward_fused(xp, np.ascontiguousarray(U.T), h0, c0)
    return lstm_forward_vectorized(xp, U, h0, c0)


def lstm_sequence_backward(dhs, acts, cs, c0, U):
    if USE_NUMBA and dhs.shape[1] <= FUSED_MAX_BATCH_BACKWARD:
        return lstm_backward_fused(dhs, acts, cs, c0, np.ascontiguousarray(U))
    return lstm_backward_vectorized(dhs, acts, cs, c0, np.ascontiguousarray(U.T))


@njit
def knn_rows_fused(points, queries, k):
    """Scalar-loop exact kNN with an insertion-sorted top-k buffer."""
    m, f = points.shape
    out = np.empty((queries.shape[0], k), dtype=np.int64)
    best_d = np.empty(k)
    best_i = np.empty(k, dtype=np.int64)
    for qi in range(queries.shape[0]):
        q = queries[qi]
        filled = 0
        for j in range(m):
            if j == q:
                continue
            d = 0.0
            for c in range(f):
                diff = points[j, c] - points[q, c]
                d += diff * diff
            # strict comparison keeps the lower index ahead on ties
            if filled == k and d >= best_d[k - 1]:
                continue
            pos = filled if filled < k else k - 1
            while pos > 0 and best_d[pos - 1] > d:
                best_d[pos] = best_d[pos - 1]
                best_i[pos] = best_i[pos - 1]
                pos -= 1
            best_d[pos] = d
            best_i[pos] = j
            if filled < k:
                filled += 1
        out[qi] = best_i
    return out


def knn_rows_vectorized(points, queries, k, chunk_bytes=1 << 26):
    m, f = points.shape
    out = np.empty((len(queries), k), dtype=np.int64)
    step = max(1, int(chunk_bytes // max(1, m * f * 8)))
    for start in range(0, len(queries), step):
        q = queries[start : start + step]
        diff = points[None, :, :] - points[q][:, None, :]
        d = np.einsum("qmf,qmf->qm", diff, diff)
        d[np.arange(len(q)), q] = np.inf
        out[start : start + step] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return out


def knn_rows(points, queries, k):
    """Indices of the ``k`` nearest other rows of ``points`` for each query row.

    Exact squared Euclidean distance, ascending, ties to the lower index.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    queries = np.ascontiguousarray(queries, dtype=np.int64)
    if USE_NUMBA:
        return knn_rows_fused(points, queries, k)
    return knn_rows_vectorized(points, queries, k)
