# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, isfinite

cnp.import_array()


def conv3x3_forward(x, w, b=None):
    cdef double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t cin = xv.shape[0], h = xv.shape[1], wd = xv.shape[2]
    cdef Py_ssize_t cout = wv.shape[0]
    out = np.zeros((cout, h, wd), dtype=np.float64)
    cdef double[:, :, ::1] yv = out
    cdef Py_ssize_t o, c, ky, kx, i, j, ii, j_lo, j_hi
    cdef double k
    for o in range(cout):
        for c in range(cin):
            for ky in range(3):
                for kx in range(3):
                    k = wv[o, c, ky, kx]
                    if k == 0.0:
                        continue
                    j_lo = 1 - kx if kx < 1 else 0
                    j_hi = wd + 1 - kx if kx > 1 else wd
                    for i in range(h):
                        ii = i + ky - 1
                        if ii < 0 or ii >= h:
                            continue
                        for j in range(j_lo, j_hi):
                            yv[o, i, j] += k * xv[c, ii, j + kx - 1]
    if b is not None:
        out += np.asarray(b, dtype=np.float64)[:, None, None]
    return out


def conv3x3_backward(x, w, gy):
    cdef double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[:, :, ::1] gv = np.ascontiguousarray(gy, dtype=np.float64)
    cdef Py_ssize_t cin = xv.shape[0], h = xv.shape[1], wd = xv.shape[2]
    cdef Py_ssize_t cout = wv.shape[0]
    gx = np.zeros((cin, h, wd), dtype=np.float64)
    gw = np.zeros((cout, cin, 3, 3), dtype=np.float64)
    cdef double[:, :, ::1] gxv = gx
    cdef double[:, :, :, ::1] gwv = gw
    cdef Py_ssize_t o, c, ky, kx, i, j, ii, j_lo, j_hi
    cdef double k, acc, g
    for o in range(cout):
        for c in range(cin):
            for ky in range(3):
                for kx in range(3):
                    k = wv[o, c, ky, kx]
                    j_lo = 1 - kx if kx < 1 else 0
                    j_hi = wd + 1 - kx if kx > 1 else wd
                    acc = 0.0
                    for i in range(h):
                        ii = i + ky - 1
                        if ii < 0 or ii >= h:
                            continue
                        for j in range(j_lo, j_hi):
                            g = gv[o, i, j]
                            acc += g * xv[c, ii, j + kx - 1]
                            gxv[c, ii, j + kx - 1] += k * g
                    gwv[o, c, ky, kx] = acc
    gb = np.asarray(gy, dtype=np.float64).reshape(cout, -1).sum(axis=1)
    return gx, gw, gb


def linear_assignment(cost):
    arr = np.asarray(cost, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"cost must be 2-D, got shape {arr.shape}")
    cdef Py_ssize_t n = arr.shape[0], m = arr.shape[1]
    if n == 0 or m == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("cost matrix contains non-finite entries")
    transposed = n > m
    if transposed:
        arr = arr.T
        n, m = m, n
    cdef double[:, ::1] c = np.ascontiguousarray(arr)
    cdef double[::1] u = np.zeros(n + 1)
    cdef double[::1] v = np.zeros(m + 1)
    cdef double[::1] minv = np.empty(m + 1)
    p_arr = np.zeros(m + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] p = p_arr
    cdef cnp.int64_t[::1] way = np.zeros(m + 1, dtype=np.int64)
    cdef unsigned char[::1] used = np.zeros(m + 1, dtype=np.uint8)
    cdef Py_ssize_t i, j, j0, j1, i0
    cdef double delta, cur
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        for j in range(m + 1):
            minv[j] = INFINITY
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = p[j0]
            delta = INFINITY
            j1 = 0
            for j in range(1, m + 1):
                if not used[j]:
                    cur = c[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    cols = np.nonzero(p_arr[1:])[0]
    rows = p_arr[1:][cols] - 1
    if transposed:
        rows, cols = cols, rows
    order = np.argsort(rows, kind="stable")
    return rows[order].astype(np.int64), cols[order].astype(np.int64)
