# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernel core. Same contracts as ``_pykern`` (see its docstring)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, log, pow, sqrt
from libc.stdlib cimport free, malloc

cnp.import_array()

__all__ = [
    "phi_vals",
    "energy_sum",
    "energy_matvec",
    "kernel_column",
    "min_dist_balls",
    "min_dist_boxes",
    "count_unique_int64",
]


cdef inline double _phi(double alpha, double r) nogil:
    if alpha > 0.0:
        if alpha == 0.5:
            return 1.0 / sqrt(r)
        if alpha == 1.0:
            return 1.0 / r
        if alpha == 2.0:
            return 1.0 / (r * r)
        return pow(r, -alpha)
    if alpha == 0.0:
        return 1.0 - log(r if r < 1.0 else 1.0)
    return 1.0


cdef inline double _rho(const double* a, const double* b, Py_ssize_t D, double hexp) nogil:
    cdef double dt, s = 0.0, d
    cdef Py_ssize_t k
    if hexp > 0.0:
        dt = pow(fabs(a[0] - b[0]), hexp)
        for k in range(1, D):
            d = a[k] - b[k]
            s += d * d
        s = sqrt(s)
        return dt if dt > s else s
    for k in range(D):
        d = a[k] - b[k]
        s += d * d
    return sqrt(s)


def phi_vals(r, double alpha):
    r = np.ascontiguousarray(r, dtype=np.float64)
    out = np.empty_like(r)
    cdef double[::1] rv = r.ravel()
    cdef double[::1] ov = out.ravel()
    cdef Py_ssize_t i, n = rv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = _phi(alpha, rv[i])
    return out


def energy_sum(pts, w, double alpha, double hexp, double diag):
    cdef double[:, ::1] P = np.ascontiguousarray(pts, dtype=np.float64)
    cdef double[::1] W = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = P.shape[0], D = P.shape[1], i, j
    cdef double off = 0.0, wsq = 0.0, row
    with nogil:
        for i in range(n):
            row = 0.0
            for j in range(i + 1, n):
                row += W[j] * _phi(alpha, _rho(&P[i, 0], &P[j, 0], D, hexp))
            off += 2.0 * W[i] * row
            wsq += W[i] * W[i]
    return off, diag * wsq


def energy_matvec(pts, w, double alpha, double hexp, double diag):
    cdef double[:, ::1] P = np.ascontiguousarray(pts, dtype=np.float64)
    cdef double[::1] W = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = P.shape[0], D = P.shape[1], i, j
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] O = out
    cdef double g
    with nogil:
        for i in range(n):
            O[i] += diag * W[i]
            for j in range(i + 1, n):
                g = _phi(alpha, _rho(&P[i, 0], &P[j, 0], D, hexp))
                O[i] += g * W[j]
                O[j] += g * W[i]
    return out


def kernel_column(pts, Py_ssize_t j, double alpha, double hexp, double diag):
    cdef double[:, ::1] P = np.ascontiguousarray(pts, dtype=np.float64)
    cdef Py_ssize_t n = P.shape[0], D = P.shape[1], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] O = out
    with nogil:
        for i in range(n):
            O[i] = _phi(alpha, _rho(&P[i, 0], &P[j, 0], D, hexp))
        O[j] = diag
    return out


def min_dist_balls(X, centers, radii):
    cdef double[:, :, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] C = np.ascontiguousarray(centers, dtype=np.float64)
    cdef double[::1] R = np.ascontiguousarray(radii, dtype=np.float64)
    cdef Py_ssize_t B = x.shape[0], d = x.shape[1], m = x.shape[2], M = C.shape[0]
    cdef Py_ssize_t b, t, k, q
    out = np.empty(B, dtype=np.float64)
    cdef double[::1] O = out
    cdef double best, s, dv
    with nogil:
        for b in range(B):
            best = 1e300
            for t in range(m):
                for q in range(M):
                    s = 0.0
                    for k in range(d):
                        dv = x[b, k, t] - C[q, k]
                        s += dv * dv
                    s = sqrt(s) - R[q]
                    if s < 0.0:
                        s = 0.0
                    if s < best:
                        best = s
            O[b] = best
    return out


def min_dist_boxes(X, lo, hi):
    cdef double[:, :, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] L = np.ascontiguousarray(lo, dtype=np.float64)
    cdef double[:, ::1] Hh = np.ascontiguousarray(hi, dtype=np.float64)
    cdef Py_ssize_t B = x.shape[0], d = x.shape[1], m = x.shape[2], M = L.shape[0]
    cdef Py_ssize_t b, t, k, q
    out = np.empty(B, dtype=np.float64)
    cdef double[::1] O = out
    cdef double best, s, v, e
    with nogil:
        for b in range(B):
            best = 1e300
            for t in range(m):
                for q in range(M):
                    s = 0.0
                    for k in range(d):
                        v = x[b, k, t]
                        e = L[q, k] - v
                        if v - Hh[q, k] > e:
                            e = v - Hh[q, k]
                        if e > 0.0:
                            s += e * e
                    s = sqrt(s)
                    if s < best:
                        best = s
            O[b] = best
    return out


def count_unique_int64(codes):
    """Distinct int64 values via an open-addressing hash set."""
    cdef long long[::1] c = np.ascontiguousarray(codes, dtype=np.int64)
    cdef Py_ssize_t n = c.shape[0]
    if n == 0:
        return 0
    cdef Py_ssize_t cap = 1
    while cap < 2 * n:
        cap <<= 1
    cdef unsigned long long mask = <unsigned long long> (cap - 1)
    cdef long long* tab = <long long*> malloc(cap * sizeof(long long))
    cdef unsigned char* used = <unsigned char*> malloc(cap)
    if tab == NULL or used == NULL:
        if tab != NULL:
            free(tab)
        if used != NULL:
            free(used)
        raise MemoryError()
    cdef Py_ssize_t i, cnt = 0
    cdef unsigned long long h
    cdef long long v
    with nogil:
        for i in range(cap):
            used[i] = 0
        for i in range(n):
            v = c[i]
            h = (<unsigned long long> v) * 0x9E3779B97F4A7C15ULL
            h = (h ^ (h >> 29)) & mask
            while used[h]:
                if tab[h] == v:
                    break
                h = (h + 1) & mask
            else:
                used[h] = 1
                tab[h] = v
                cnt += 1
    free(tab)
    free(used)
    return cnt
