# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled pair-sum kernel for the Gagliardo seminorm."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def pair_sums(const long long[::1] ii, const long long[::1] jj,
              const double[:, ::1] values, const double[:, ::1] table,
              const double[::1] weights):
    """Ordered-pair sums  sum_{a != b} w[a] w[b] (v[a, c] - v[b, c])**2 * table[|di|, |dj|]
    per column c.

    ``values`` has shape (N, m).  Pairs are visited in a fixed order so the
    result is bit-reproducible.
    """
    cdef Py_ssize_t n = values.shape[0]
    cdef Py_ssize_t m = values.shape[1]
    cdef Py_ssize_t a, b, c
    cdef long long di, dj
    cdef double t, d
    out = np.zeros(m, dtype=np.float64)
    cdef double[::1] acc = out
    cdef double[::1] row = np.zeros(m, dtype=np.float64)
    for a in range(n):
        for c in range(m):
            row[c] = 0.0
        for b in range(a + 1, n):
            di = ii[a] - ii[b]
            if di < 0:
                di = -di
            dj = jj[a] - jj[b]
            if dj < 0:
                dj = -dj
            t = table[di, dj] * weights[b]
            if t == 0.0:
                continue
            for c in range(m):
                d = values[a, c] - values[b, c]
                row[c] += d * d * t
        for c in range(m):
            acc[c] += 2.0 * weights[a] * row[c]
    return out
