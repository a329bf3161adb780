# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Gaussian-mixture density kernels.

Same contract as ``hqnrate._pykernels``; selected by ``hqnrate.kernels``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


def component_log_prob(const double[:, ::1] X,
                       const double[:, ::1] means,
                       const double[:, :, ::1] prec_chol,
                       const double[::1] log_const):
    """out[i, r] = log_const[r] - 0.5 * ||P_r (x_i - mu_r)||^2 with P_r lower triangular."""
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], k = means.shape[0]
    cdef Py_ssize_t i, r, a, b
    cdef double acc, maha, diff_b
    out_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] diff = np.empty(d, dtype=np.float64)
    for i in range(n):
        for r in range(k):
            for a in range(d):
                diff[a] = X[i, a] - means[r, a]
            maha = 0.0
            for a in range(d):
                acc = 0.0
                for b in range(a + 1):
                    acc += prec_chol[r, a, b] * diff[b]
                maha += acc * acc
            out[i, r] = log_const[r] - 0.5 * maha
    return out_arr


def logsumexp_rows(const double[:, ::1] A):
    """Row-wise log-sum-exp; rows that are entirely -inf give -inf."""
    cdef Py_ssize_t n = A.shape[0], k = A.shape[1]
    cdef Py_ssize_t i, r
    cdef double m, s
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    for i in range(n):
        m = -INFINITY
        for r in range(k):
            if A[i, r] > m:
                m = A[i, r]
        if m == -INFINITY:
            out[i] = -INFINITY
            continue
        s = 0.0
        for r in range(k):
            s += exp(A[i, r] - m)
        out[i] = m + log(s)
    return out_arr
