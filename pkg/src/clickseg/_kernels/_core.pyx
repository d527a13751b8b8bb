# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled f64 matrix-multiply kernel.

Floating-point contract (shared with the pure-numpy fallback): every output
element accumulates its inner products in increasing-k order, one rounding per
multiply and one per add. Compiled with fp-contract off so no FMA changes the
rounding; results are bit-identical to a naive Python triple loop.
"""

import numpy as np

cimport cython

BACKEND = "compiled"


def matmul(double[:, ::1] a, double[:, ::1] b):
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t kk = a.shape[1]
    cdef Py_ssize_t n = b.shape[1]
    if b.shape[0] != kk:
        raise ValueError("matmul: inner dimensions disagree")
    out_arr = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, k, j
    cdef double aik
    with nogil:
        for i in range(m):
            for k in range(kk):
                aik = a[i, k]
                for j in range(n):
                    out[i, j] = out[i, j] + aik * b[k, j]
    return out_arr
