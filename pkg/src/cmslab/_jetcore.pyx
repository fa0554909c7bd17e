# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled truncated-product kernel for dense jet coefficient blocks."""

import numpy as np


def mul_truncated(const double[:, ::1] a, const double[:, ::1] b,
                  const int[::1] ia, const int[::1] ib, const int[::1] ko,
                  int n_out):
    """Return ``out[ko[p], m] += a[ia[p], m] * b[ib[p], m]`` over all pairs ``p``."""
    cdef Py_ssize_t n_pairs = ia.shape[0]
    cdef Py_ssize_t width = a.shape[1]
    out_arr = np.zeros((n_out, width), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t p, m
    cdef int i, j, k
    with nogil:
        for p in range(n_pairs):
            i = ia[p]
            j = ib[p]
            k = ko[p]
            for m in range(width):
                out[k, m] += a[i, m] * b[j, m]
    return out_arr
