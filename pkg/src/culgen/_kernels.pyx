# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled single-head softmax attention core (forward and backward)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


cdef inline double _dot(const double* a, const double* b, Py_ssize_t n) noexcept nogil:
    cdef double s = 0.0
    cdef Py_ssize_t c
    for c in range(n):
        s += a[c] * b[c]
    return s


cdef inline void _axpy(double alpha, const double* x, double* y, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t c
    for c in range(n):
        y[c] += alpha * x[c]


def attention_forward(const double[:, ::1] q, const double[:, ::1] k,
                      const double[:, ::1] v, double scale):
    """Return ``(out, weights)`` for ``softmax(q @ k.T * scale) @ v``."""
    cdef Py_ssize_t lq = q.shape[0], lk = k.shape[0], dk = q.shape[1], dv = v.shape[1]
    if k.shape[1] != dk or v.shape[0] != lk:
        raise ValueError("attention_forward: incompatible shapes")
    out_arr = np.zeros((lq, dv), dtype=np.float64)
    w_arr = np.empty((lq, lk), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] w = w_arr
    cdef Py_ssize_t i, j
    cdef double s, m, total
    cdef double* wr
    with nogil:
        for i in range(lq):
            wr = &w[i, 0]
            m = -1e308
            for j in range(lk):
                s = _dot(&q[i, 0], &k[j, 0], dk) * scale
                wr[j] = s
                if s > m:
                    m = s
            total = 0.0
            for j in range(lk):
                wr[j] = exp(wr[j] - m)
                total += wr[j]
            for j in range(lk):
                wr[j] = wr[j] / total
                _axpy(wr[j], &v[j, 0], &out[i, 0], dv)
    return out_arr, w_arr


def attention_backward(const double[:, ::1] dout, const double[:, ::1] w,
                       const double[:, ::1] q, const double[:, ::1] k,
                       const double[:, ::1] v, double scale):
    """Gradients ``(dq, dk, dv)`` of the attention core given ``dout``."""
    cdef Py_ssize_t lq = q.shape[0], lk = k.shape[0], dk = q.shape[1], dv = v.shape[1]
    dq_arr = np.zeros((lq, dk), dtype=np.float64)
    dk_arr = np.zeros((lk, dk), dtype=np.float64)
    dv_arr = np.zeros((lk, dv), dtype=np.float64)
    ds_arr = np.empty(lk, dtype=np.float64)
    cdef double[:, ::1] gq = dq_arr
    cdef double[:, ::1] gk = dk_arr
    cdef double[:, ::1] gv = dv_arr
    cdef double[::1] ds = ds_arr
    cdef Py_ssize_t i, j
    cdef double dot, g
    with nogil:
        for i in range(lq):
            dot = 0.0
            for j in range(lk):
                ds[j] = _dot(&dout[i, 0], &v[j, 0], dv)
                _axpy(w[i, j], &dout[i, 0], &gv[j, 0], dv)
                dot += ds[j] * w[i, j]
            for j in range(lk):
                g = w[i, j] * (ds[j] - dot) * scale
                _axpy(g, &k[j, 0], &gq[i, 0], dk)
                _axpy(g, &q[i, 0], &gk[j, 0], dk)
    return dq_arr, dk_arr, dv_arr
