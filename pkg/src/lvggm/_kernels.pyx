# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: truncated power iteration and nonnegative coordinate descent.

Semantics match ``_kernels_py`` (up to floating-point summation order); see
that module for documentation. ``H`` passed to the coordinate descent must be
symmetric.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()


cdef inline bint _before(double[::1] a, Py_ssize_t i, Py_ssize_t j) noexcept nogil:
    # strict total order: larger |value| first, then smaller index
    return a[i] > a[j] or (a[i] == a[j] and i < j)


cdef void _select_k(double[::1] a, Py_ssize_t[::1] idx, Py_ssize_t k) noexcept nogil:
    # quickselect: afterwards idx[:k] holds the k entries first in the order
    cdef Py_ssize_t lo = 0, hi = idx.shape[0] - 1, i, store, pivot, mid, tmp
    while lo < hi:
        mid = (lo + hi) // 2
        pivot = idx[mid]
        idx[mid] = idx[hi]; idx[hi] = pivot
        store = lo
        for i in range(lo, hi):
            if _before(a, idx[i], pivot):
                tmp = idx[i]; idx[i] = idx[store]; idx[store] = tmp
                store += 1
        idx[hi] = idx[store]; idx[store] = pivot
        if store == k - 1:
            return
        elif store < k - 1:
            lo = store + 1
        else:
            hi = store - 1


cdef void _truncate(double[::1] y, double[::1] absy, Py_ssize_t[::1] idx,
                    Py_ssize_t k, double[::1] out) noexcept nogil:
    cdef Py_ssize_t n = y.shape[0], i
    for i in range(n):
        absy[i] = fabs(y[i])
        idx[i] = i
        out[i] = 0.0
    if k < n:
        _select_k(absy, idx, k)
    for i in range(k):
        out[idx[i]] = y[idx[i]]


def top_k_indices(y, Py_ssize_t k):
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = yv.shape[0], i
    absy = np.empty(n)
    idx = np.empty(n, dtype=np.intp)
    out = np.empty(n)
    _truncate(yv, absy, idx, k, out)
    return np.sort(idx[:k])


def tpi_iterate(Y, x0, Py_ssize_t k, Py_ssize_t max_iter, double tol, Py_ssize_t stable_iters=0):
    cdef double[:, ::1] A = np.ascontiguousarray(Y, dtype=np.float64)
    cdef Py_ssize_t n = A.shape[0], i, j, it = 0
    cdef double[::1] x0v = np.ascontiguousarray(x0, dtype=np.float64)
    x_arr = np.zeros(n)
    cdef double[::1] x = x_arr
    cdef double[::1] y = np.empty(n)
    cdef double[::1] xn = np.empty(n)
    cdef double[::1] absy = np.empty(n)
    cdef Py_ssize_t[::1] idx = np.empty(n, dtype=np.intp)
    cdef double nrm, s, diff
    cdef Py_ssize_t stable = 0
    cdef bint same
    with nogil:
        _truncate(x0v, absy, idx, k, x)
        nrm = 0.0
        for i in range(n):
            nrm += x[i] * x[i]
        nrm = sqrt(nrm)
        if nrm == 0.0:
            it = -1
        else:
            for i in range(n):
                x[i] /= nrm
            it = 0
            while it < max_iter:
                it += 1
                # y = A x, skipping zero entries of the sparse iterate
                for i in range(n):
                    y[i] = 0.0
                for j in range(n):
                    if x[j] != 0.0:
                        s = x[j]
                        for i in range(n):
                            y[i] += A[j, i] * s
                _truncate(y, absy, idx, k, xn)
                nrm = 0.0
                for i in range(n):
                    nrm += xn[i] * xn[i]
                nrm = sqrt(nrm)
                if nrm == 0.0:
                    for i in range(n):
                        x[i] = 0.0
                    break
                diff = 0.0
                same = True
                for i in range(n):
                    if (xn[i] != 0.0) != (x[i] != 0.0):
                        same = False
                    xn[i] /= nrm
                    s = fabs(xn[i] - x[i])
                    if s > diff:
                        diff = s
                    x[i] = xn[i]
                if diff <= tol:
                    break
                stable = stable + 1 if same else 0
                if stable_iters > 0 and stable >= stable_iters:
                    break
    if it < 0:
        return x_arr, 0
    return x_arr, it


def nn_coordinate_descent(H, g, c, double tol, Py_ssize_t max_sweeps):
    cdef double[:, ::1] Hm = np.ascontiguousarray(H, dtype=np.float64)
    cdef double[::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    c_arr = np.ascontiguousarray(c, dtype=np.float64)
    cdef double[::1] cv = c_arr
    cdef Py_ssize_t n = gv.shape[0], i, j, sweeps = 0
    cdef double[::1] Hc = np.empty(n)
    cdef double hii, gi, new, delta, residual = 0.0, v
    with nogil:
        for i in range(n):
            Hc[i] = 0.0
            for j in range(n):
                Hc[i] += Hm[i, j] * cv[j]
        while sweeps < max_sweeps:
            sweeps += 1
            for i in range(n):
                hii = Hm[i, i]
                if hii <= 0.0:
                    continue
                gi = Hc[i] + gv[i]
                new = cv[i] - gi / hii
                if new < 0.0:
                    new = 0.0
                delta = new - cv[i]
                if delta != 0.0:
                    cv[i] = new
                    for j in range(n):
                        Hc[j] += delta * Hm[i, j]
            residual = 0.0
            for i in range(n):
                gi = Hc[i] + gv[i]
                if cv[i] > 0.0:
                    v = fabs(gi)
                else:
                    v = -gi if gi < 0.0 else 0.0
                if v > residual:
                    residual = v
            if residual <= tol:
                break
    if c_arr is not c and isinstance(c, np.ndarray):
        c[...] = c_arr
    return c_arr, sweeps, residual
