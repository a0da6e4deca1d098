"""Hot inner loops, each in a jitted and a pure-numpy flavour.

The public names at the bottom dispatch on ``iccl._accel.NUMBA_ENABLED``.
``*_nb`` and ``*_np`` stay importable so tests can check that both paths
agree and ``benchmarks/bench_kernels.py`` can time them side by side.
"""
import numpy as np

from ._accel import njit, pick


# --- segment / box clipping -------------------------------------------------

@njit
def _interior_span(p0, d, lo, hi):
    # parametric [t_min, t_max] of the open box crossed by p0 + t*d, t in [0, 1]
    t_min = 0.0
    t_max = 1.0
    for a in range(3):
        if d[a] == 0.0:
            if p0[a] <= lo[a] or p0[a] >= hi[a]:
                return 0.0
            continue
        t0 = (lo[a] - p0[a]) / d[a]
        t1 = (hi[a] - p0[a]) / d[a]
        if t0 > t1:
            t0, t1 = t1, t0
        if t0 > t_min:
            t_min = t0
        if t1 < t_max:
            t_max = t1
        if t_max <= t_min:
            return 0.0
    return t_max - t_min


@njit
def segment_box_lengths_nb(p0, p1, lo, hi):
    out = np.zeros((p0.shape[0], lo.shape[0]))
    d = np.empty(3)
    for s in range(p0.shape[0]):
        for a in range(3):
            d[a] = p1[s, a] - p0[s, a]
        seg_len = np.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        for b in range(lo.shape[0]):
            out[s, b] = _interior_span(p0[s], d, lo[b], hi[b]) * seg_len
    return out


def segment_box_lengths_np(p0, p1, lo, hi):
    p0 = p0[:, None, :]
    d = (p1 - p0[:, 0, :])[:, None, :]
    flat = d == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = (lo[None] - p0) / d
        t1 = (hi[None] - p0) / d
    t_lo = np.where(flat, -np.inf, np.minimum(t0, t1))
    t_hi = np.where(flat, np.inf, np.maximum(t0, t1))
    outside = flat & ((p0 <= lo[None]) | (p0 >= hi[None]))
    t_min = np.maximum(t_lo.max(axis=2), 0.0)
    t_max = np.minimum(t_hi.min(axis=2), 1.0)
    span = np.where(outside.any(axis=2), 0.0, np.maximum(t_max - t_min, 0.0))
    return span * np.linalg.norm(d[:, 0, :], axis=1)[:, None]


@njit
def shadowing_loss_db_nb(nodes, waypoints, lo, hi, atten):
    out = np.zeros((nodes.shape[0], waypoints.shape[0]))
    d = np.empty(3)
    for i in range(nodes.shape[0]):
        for j in range(waypoints.shape[0]):
            for a in range(3):
                d[a] = waypoints[j, a] - nodes[i, a]
            seg_len = np.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
            acc = 0.0
            for b in range(lo.shape[0]):
                acc += atten[b] * _interior_span(nodes[i], d, lo[b], hi[b])
            out[i, j] = acc * seg_len
    return out


def shadowing_loss_db_np(nodes, waypoints, lo, hi, atten):
    m, n = nodes.shape[0], waypoints.shape[0]
    if lo.shape[0] == 0:
        return np.zeros((m, n))
    p0 = np.repeat(nodes, n, axis=0)
    p1 = np.tile(waypoints, (m, 1))
    lengths = segment_box_lengths_np(p0, p1, lo, hi)
    return (lengths @ atten).reshape(m, n)


# --- 1-D convolution plumbing -----------------------------------------------

@njit
def im2col_nb(x, k):
    b_sz, length, ch = x.shape
    l_out = length - k + 1
    cols = np.empty((b_sz, l_out, k * ch), dtype=x.dtype)
    for b in range(b_sz):
        for t in range(l_out):
            for s in range(k):
                for c in range(ch):
                    cols[b, t, s * ch + c] = x[b, t + s, c]
    return cols


def im2col_np(x, k):
    l_out = x.shape[1] - k + 1
    return np.concatenate([x[:, s:s + l_out, :] for s in range(k)], axis=2)


@njit
def col2im_nb(cols, k, length):
    b_sz, l_out, kc = cols.shape
    ch = kc // k
    x = np.zeros((b_sz, length, ch), dtype=cols.dtype)
    for b in range(b_sz):
        for t in range(l_out):
            for s in range(k):
                for c in range(ch):
                    x[b, t + s, c] += cols[b, t, s * ch + c]
    return x


def col2im_np(cols, k, length):
    b_sz, l_out, kc = cols.shape
    ch = kc // k
    x = np.zeros((b_sz, length, ch), dtype=cols.dtype)
    for s in range(k):
        x[:, s:s + l_out, :] += cols[:, :, s * ch:(s + 1) * ch]
    return x


# --- max pooling along the waypoint axis --------------------------------------

@njit
def maxpool_forward_nb(x, pool):
    b_sz, length, ch = x.shape
    l_out = length // pool
    out = np.empty((b_sz, l_out, ch), dtype=x.dtype)
    arg = np.empty((b_sz, l_out, ch), dtype=np.int8)
    for b in range(b_sz):
        for t in range(l_out):
            for c in range(ch):
                best = x[b, t * pool, c]
                at = 0
                for s in range(1, pool):
                    v = x[b, t * pool + s, c]
                    if v > best:
                        best = v
                        at = s
                out[b, t, c] = best
                arg[b, t, c] = at
    return out, arg


def maxpool_forward_np(x, pool):
    b_sz, length, ch = x.shape
    l_out = length // pool
    win = x[:, :l_out * pool, :].reshape(b_sz, l_out, pool, ch)
    arg = win.argmax(axis=2).astype(np.int8)
    out = np.take_along_axis(win, arg[:, :, None, :].astype(np.intp), axis=2)[:, :, 0, :]
    return out, arg


@njit
def maxpool_backward_nb(dout, arg, length, pool):
    b_sz, l_out, ch = dout.shape
    dx = np.zeros((b_sz, length, ch), dtype=dout.dtype)
    for b in range(b_sz):
        for t in range(l_out):
            for c in range(ch):
                dx[b, t * pool + arg[b, t, c], c] = dout[b, t, c]
    return dx


def maxpool_backward_np(dout, arg, length, pool):
    b_sz, l_out, ch = dout.shape
    win = np.zeros((b_sz, l_out, pool, ch), dtype=dout.dtype)
    np.put_along_axis(win, arg[:, :, None, :].astype(np.intp), dout[:, :, None, :], axis=2)
    dx = np.zeros((b_sz, length, ch), dtype=dout.dtype)
    dx[:, :l_out * pool, :] = win.reshape(b_sz, l_out * pool, ch)
    return dx


# --- nearest neighbour scan ---------------------------------------------------

@njit
def nearest_rows_nb(store, queries):
    n_q = queries.shape[0]
    out = np.empty(n_q, dtype=np.int64)
    for q in range(n_q):
        best = np.inf
        at = 0
        for r in range(store.shape[0]):
            acc = 0.0
            for k in range(store.shape[1]):
                diff = store[r, k] - queries[q, k]
                acc += diff * diff
            if acc < best:
                best = acc
                at = r
        out[q] = at
    return out


def nearest_rows_np(store, queries, chunk=64):
    out = np.empty(queries.shape[0], dtype=np.int64)
    for start in range(0, queries.shape[0], chunk):
        q = queries[start:start + chunk]
        dist = ((store[None, :, :] - q[:, None, :]) ** 2).sum(axis=2)
        out[start:start + chunk] = dist.argmin(axis=1)
    return out


segment_box_lengths = pick(segment_box_lengths_nb, segment_box_lengths_np)
shadowing_loss_db = pick(shadowing_loss_db_nb, shadowing_loss_db_np)
im2col = pick(im2col_nb, im2col_np)
col2im = pick(col2im_nb, col2im_np)
maxpool_forward = pick(maxpool_forward_nb, maxpool_forward_np)
maxpool_backward = pick(maxpool_backward_nb, maxpool_backward_np)
nearest_rows = pick(nearest_rows_nb, nearest_rows_np)
