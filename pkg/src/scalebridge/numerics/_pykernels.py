"""Numpy reference implementations of the hot kernels.

These are used when the compiled extension is unavailable (or when
``SCALEBRIDGE_KERNELS=python`` is set) and serve as the cross-check for it.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _im2col(x):
    # x: [C, H, W] -> [C*9, H*W], zero padding of width 1
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # [C, H, W, 3, 3]
    return win.transpose(0, 3, 4, 1, 2).reshape(c * 9, h * w)


def conv3x3_forward(x, w, b=None):
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    cout = w.shape[0]
    _, h, wd = x.shape
    y = w.reshape(cout, -1) @ _im2col(x)
    if b is not None:
        y += np.asarray(b, dtype=np.float64)[:, None]
    return y.reshape(cout, h, wd)


def conv3x3_backward(x, w, gy):
    """Return (grad_input, grad_weight, grad_bias) for ``conv3x3_forward``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    cout, cin = w.shape[:2]
    _, h, wd = x.shape
    gy2 = gy.reshape(cout, h * wd)
    gw = (gy2 @ _im2col(x).T).reshape(w.shape)
    gb = gy2.sum(axis=1)
    gcols = (w.reshape(cout, -1).T @ gy2).reshape(cin, 3, 3, h, wd)
    gxp = np.zeros((cin, h + 2, wd + 2))
    for ky in range(3):
        for kx in range(3):
            gxp[:, ky:ky + h, kx:kx + wd] += gcols[:, ky, kx]
    return gxp[:, 1:-1, 1:-1].copy(), gw, gb


def linear_assignment(cost):
    """Minimum-cost injective assignment of size ``min(n, m)``.

    Shortest augmenting path with row/column potentials. Returns
    ``(rows, cols)`` as int64 arrays sorted by row.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError(f"cost must be 2-D, got shape {cost.shape}")
    n, m = cost.shape
    if n == 0 or m == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix contains non-finite entries")
    transposed = n > m
    if transposed:
        cost = cost.T
        n, m = m, n

    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1

    cols = np.nonzero(p[1:])[0]
    rows = p[1:][cols] - 1
    if transposed:
        rows, cols = cols, rows
    order = np.argsort(rows, kind="stable")
    return rows[order].astype(np.int64), cols[order].astype(np.int64)
