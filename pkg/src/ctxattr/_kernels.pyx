# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled ALTI relevance kernel. Same contract as ``_kernels_py.alti_relevance``."""
import numpy as np

from libc.math cimport fabs


def alti_relevance(const double[:, :, ::1] attn,
                   const double[:, :, ::1] head_values,
                   const double[:, ::1] residual,
                   const double[:, ::1] outputs):
    cdef Py_ssize_t H = attn.shape[0]
    cdef Py_ssize_t n = attn.shape[1]
    cdef Py_ssize_t d = outputs.shape[1]
    out = np.zeros((n, n), dtype=np.float64)
    tmp = np.empty(d, dtype=np.float64)
    cdef double[:, ::1] r = out
    cdef double[::1] t = tmp
    cdef Py_ssize_t i, j, h, k
    cdef double ynorm, dist, a, v
    with nogil:
        for i in range(n):
            ynorm = 0.0
            for k in range(d):
                ynorm += fabs(outputs[i, k])
            for j in range(i + 1):
                for k in range(d):
                    t[k] = 0.0
                for h in range(H):
                    a = attn[h, i, j]
                    if a != 0.0:
                        for k in range(d):
                            t[k] += a * head_values[h, j, k]
                if j == i:
                    for k in range(d):
                        t[k] += residual[i, k]
                dist = 0.0
                for k in range(d):
                    dist += fabs(outputs[i, k] - t[k])
                v = ynorm - dist
                r[i, j] = v if v > 0.0 else 0.0
    return out
