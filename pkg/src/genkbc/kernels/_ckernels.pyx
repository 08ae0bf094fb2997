# cython: language_level=3
"""Compiled kernels: direct circular correlation / convolution and the
fused score-plus-gradients used by the training loop.

Semantics must match _pykernels exactly; the test suite holds both
backends to the same oracle.
"""

import numpy as np

cimport cython
cimport numpy as cnp

cnp.import_array()


cdef inline object _as_vec(object x, str name):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError(f"{name} must be non-empty")
    return arr


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _corr(const double[::1] a, const double[::1] b, double[::1] out) noexcept nogil:
    # out[k] = sum_i a[i] * b[(i + k) mod d], split to avoid the mod
    cdef Py_ssize_t d = a.shape[0]
    cdef Py_ssize_t k, i
    cdef double acc
    for k in range(d):
        acc = 0.0
        for i in range(d - k):
            acc += a[i] * b[i + k]
        for i in range(d - k, d):
            acc += a[i] * b[i + k - d]
        out[k] = acc


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _conv(const double[::1] a, const double[::1] b, double[::1] out) noexcept nogil:
    # out[k] = sum_i a[i] * b[(k - i) mod d]
    cdef Py_ssize_t d = a.shape[0]
    cdef Py_ssize_t k, i
    cdef double acc
    for k in range(d):
        acc = 0.0
        for i in range(k + 1):
            acc += a[i] * b[k - i]
        for i in range(k + 1, d):
            acc += a[i] * b[k - i + d]
        out[k] = acc


def circular_correlation(a, b):
    """out[k] = sum_i a[i] * b[(i + k) mod d]."""
    a_arr = _as_vec(a, "a")
    b_arr = _as_vec(b, "b")
    if a_arr.shape[0] != b_arr.shape[0]:
        raise ValueError(f"length mismatch: {a_arr.shape[0]} vs {b_arr.shape[0]}")
    out = np.empty(a_arr.shape[0], dtype=np.float64)
    _corr(a_arr, b_arr, out)
    return out


def circular_convolution(a, b):
    """out[k] = sum_i a[i] * b[(k - i) mod d]."""
    a_arr = _as_vec(a, "a")
    b_arr = _as_vec(b, "b")
    if a_arr.shape[0] != b_arr.shape[0]:
        raise ValueError(f"length mismatch: {a_arr.shape[0]} vs {b_arr.shape[0]}")
    out = np.empty(a_arr.shape[0], dtype=np.float64)
    _conv(a_arr, b_arr, out)
    return out


@cython.boundscheck(False)
@cython.wraparound(False)
def score_and_grads(h_r, h_s, h_t):
    """Triple score f = h_r . (h_s o h_t) and its gradients.

    Returns (f, df/dh_r, df/dh_s, df/dh_t) where
        df/dh_r = h_s o h_t
        df/dh_s = h_r o h_t
        df/dh_t = h_s * h_r   (circular convolution)
    """
    r_arr = _as_vec(h_r, "h_r")
    s_arr = _as_vec(h_s, "h_s")
    t_arr = _as_vec(h_t, "h_t")
    cdef Py_ssize_t d = r_arr.shape[0]
    if s_arr.shape[0] != d or t_arr.shape[0] != d:
        raise ValueError(
            f"length mismatch: {d} vs {s_arr.shape[0]} vs {t_arr.shape[0]}"
        )
    g_r = np.empty(d, dtype=np.float64)
    g_s = np.empty(d, dtype=np.float64)
    g_t = np.empty(d, dtype=np.float64)
    cdef const double[::1] rv = r_arr
    cdef const double[::1] sv = s_arr
    cdef const double[::1] tv = t_arr
    cdef double[::1] grv = g_r
    cdef double[::1] gsv = g_s
    cdef double[::1] gtv = g_t
    cdef double f = 0.0
    cdef Py_ssize_t k
    with nogil:
        _corr(sv, tv, grv)
        _corr(rv, tv, gsv)
        _conv(sv, rv, gtv)
        for k in range(d):
            f += rv[k] * grv[k]
    return f, g_r, g_s, g_t
