# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_fallback.py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt
from libc.stdlib cimport malloc, free

cnp.import_array()

DIRECT, INDIRECT, IMPLICIT = 0, 1, 2


def adam_update(double[::1] param, double[::1] grad, double[::1] m, double[::1] v,
                double beta1, double beta2, double eps, double step_size, double inv_sqrt_bc2):
    cdef Py_ssize_t i, n = param.shape[0]
    cdef double g, mi, vi, den
    cdef double c1 = 1.0 - beta1
    cdef double c2 = 1.0 - beta2
    if grad.shape[0] != n or m.shape[0] != n or v.shape[0] != n:
        raise ValueError("adam_update: length mismatch")
    with nogil:
        for i in range(n):
            g = grad[i]
            mi = beta1 * m[i]
            mi = mi + c1 * g
            m[i] = mi
            vi = beta2 * v[i]
            vi = vi + (g * g) * c2
            v[i] = vi
            den = sqrt(vi) * inv_sqrt_bc2
            den = den + eps
            param[i] = param[i] - (mi * step_size) / den


cdef void _sort_desc(double* a, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double key
    for i in range(1, n):
        key = a[i]
        j = i - 1
        while j >= 0 and a[j] < key:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = key


def sparsemax_rows(z, bint mask_diagonal=False):
    cdef const double[:, ::1] zz = np.ascontiguousarray(z, dtype=np.float64)
    if zz.ndim != 2 or zz.shape[1] == 0:
        raise ValueError("sparsemax needs a non-empty 2-D array")
    cdef Py_ssize_t n = zz.shape[0], d = zz.shape[1]
    if mask_diagonal and (n != d or d < 2):
        raise ValueError("diagonal masking needs a square matrix with n >= 2")
    out = np.zeros((n, d), dtype=np.float64)
    cdef double[:, ::1] oo = out
    cdef double* buf = <double*> malloc(d * sizeof(double))
    cdef Py_ssize_t i, j, m, rho
    cdef double css, tau, x
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                m = 0
                for j in range(d):
                    if mask_diagonal and j == i:
                        continue
                    buf[m] = zz[i, j]
                    m += 1
                _sort_desc(buf, m)
                css = 0.0
                rho = 1
                tau = 0.0
                for j in range(m):
                    css = css + buf[j]
                    if 1.0 + (j + 1.0) * buf[j] > css:
                        rho = j + 1
                        tau = css
                tau = (tau - 1.0) / rho
                for j in range(d):
                    if mask_diagonal and j == i:
                        continue
                    x = zz[i, j] - tau
                    oo[i, j] = x if x > 0.0 else 0.0
    finally:
        free(buf)
    return out


def scan_conflicts(adj, int na, int np_, int nk, int max_len=2):
    """Length-2 rule scan; longer chains are delegated to the fallback."""
    if max_len != 2:
        from rancl import _fallback
        return _fallback.scan_conflicts(adj, na, np_, nk, max_len)
    cdef const cnp.int8_t[:, ::1] a = np.ascontiguousarray(adj, dtype=np.int8)
    cdef int p0 = na, k0 = na + np_, n = na + np_ + nk
    cdef int a1, a2, p, p1, p2, k, k2, x, lo, hi
    cdef bint skip
    found = set()
    for a1 in range(na):
        for a2 in range(a1 + 1, na):
            for p in range(p0, k0):
                if a[a1, p] and a[a2, p]:
                    found.add((DIRECT, a1, a2, (p,)))
            for p1 in range(p0, k0):
                if not a[a1, p1]:
                    continue
                for p2 in range(p0, k0):
                    if p2 == p1 or not a[a2, p2]:
                        continue
                    for k in range(k0, n):
                        if a[p1, k] and a[p2, k]:
                            found.add((INDIRECT, a1, a2, (min(p1, p2), k, max(p1, p2))))
    for a1 in range(na):
        for a2 in range(na):
            if a1 == a2:
                continue
            lo = min(a1, a2)
            hi = max(a1, a2)
            for p1 in range(p0, k0):
                if not a[a1, p1] or a[a2, p1]:
                    continue
                for k2 in range(k0, n):
                    if not a[a2, k2]:
                        continue
                    skip = False
                    if a[p1, k2]:
                        for p2 in range(p0, k0):
                            if p2 != p1 and a[a2, p2] and a[p2, k2]:
                                skip = True
                                break
                    if skip:
                        continue
                    for x in range(p0, n):
                        if x == p1 or x == k2:
                            continue
                        if a[p1, x] and a[x, k2]:
                            found.add((IMPLICIT, lo, hi, (p1, x, k2)))
    return list(found)
