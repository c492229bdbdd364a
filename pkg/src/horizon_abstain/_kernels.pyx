# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled selection kernels; see ``_kernels_py`` for the reference versions."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def prefix_sums(risks):
    cdef const double[:, ::1] r = np.ascontiguousarray(risks, dtype=np.float64)
    cdef Py_ssize_t m = r.shape[0], H = r.shape[1], i, t
    out = np.zeros((m, H + 1), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double acc
    for i in range(m):
        acc = 0.0
        for t in range(H):
            acc = acc + r[i, t]
            o[i, t + 1] = acc
    return out


cdef inline Py_ssize_t _argmin_linear(const double[:, ::1] p, Py_ssize_t i, double gamma) nogil:
    cdef Py_ssize_t e, best = 0
    cdef double val, best_val = p[i, 0] - gamma * 0.0
    for e in range(1, p.shape[1]):
        val = p[i, e] - gamma * <double>e
        if val < best_val:
            best_val = val
            best = e
    return best


def partial_ends(prefix, double gamma):
    cdef const double[:, ::1] p = np.ascontiguousarray(prefix, dtype=np.float64)
    cdef Py_ssize_t m = p.shape[0], i
    out = np.empty(m, dtype=np.int64)
    cdef long long[::1] o = out
    with nogil:
        for i in range(m):
            o[i] = _argmin_linear(p, i, gamma)
    return out


def interval_tables(prefix):
    cdef const double[:, ::1] p = np.ascontiguousarray(prefix, dtype=np.float64)
    cdef Py_ssize_t m = p.shape[0], H = p.shape[1] - 1, i, h, s, best_s
    starts = np.ones((m, H + 1), dtype=np.int64)
    minrisk = np.zeros((m, H + 1), dtype=np.float64)
    cdef long long[:, ::1] st = starts
    cdef double[:, ::1] mr = minrisk
    cdef double w, best_w
    with nogil:
        for i in range(m):
            for h in range(1, H + 1):
                best_s = 1
                best_w = p[i, h] - p[i, 0]
                for s in range(2, H - h + 2):
                    w = p[i, s + h - 1] - p[i, s - 1]
                    if w < best_w:
                        best_w = w
                        best_s = s
                st[i, h] = best_s
                mr[i, h] = best_w
    return starts, minrisk


def interval_lengths(minrisk, double gamma):
    return partial_ends(minrisk, gamma)
