# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: nodewise support function, prox and its Jacobian,
and the cubic grid scan used by the brute-force oracles.

Semantics match ``_kernels_py`` exactly.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY

cnp.import_array()

cdef double CONE_RTOL = 1e-12


cdef inline double _support1(const double* q, int m, int kind, double a, double b, int n) noexcept nogil:
    cdef int j
    cdef double s = 0.0, tr = 0.0, mn, dn = 0.0, v
    if kind == 0:
        for j in range(m):
            s += q[j] * q[j]
        return a * sqrt(s)
    for j in range(n):
        tr += q[j]
    mn = tr / n
    for j in range(m):
        v = q[j] - mn if j < n else q[j]
        dn += v * v
    dn = sqrt(dn)
    if tr >= a * dn - CONE_RTOL * (fabs(tr) + a * dn):
        return (b / a) * (tr if tr > 0.0 else 0.0)
    return INFINITY


def support_nodes(double[:, ::1] Q, int kind, double a, double b, int n):
    cdef Py_ssize_t N = Q.shape[0], i
    cdef int m = Q.shape[1]
    out = np.empty(N)
    cdef double[::1] o = out
    with nogil:
        for i in range(N):
            o[i] = _support1(&Q[i, 0], m, kind, a, b, n)
    return out


cdef inline void _prox1(const double* z, double lam, double* out, int m, int kind,
                        double a, double b, int n) noexcept nogil:
    cdef int j
    cdef double nz = 0.0, thr, f, sn, x, r = 0.0, c, x_a, z0, zs, bb, aa, v
    if kind == 0:
        for j in range(m):
            nz += z[j] * z[j]
        nz = sqrt(nz)
        thr = lam * a
        f = 1.0 - thr / nz if nz > thr else 0.0
        for j in range(m):
            out[j] = f * z[j]
        return
    sn = sqrt(<double>n)
    x = 0.0
    for j in range(n):
        x += z[j]
    x /= sn
    for j in range(m):
        v = z[j] - x / sn if j < n else z[j]
        r += v * v
    r = sqrt(r)
    c = a / sn
    x_a = lam * b / c
    z0 = x_a - x
    if r <= c * z0:
        for j in range(m):
            out[j] = 0.0
    elif c * r <= -z0:
        for j in range(m):
            out[j] = z[j] - x_a / sn if j < n else z[j]
    else:
        zs = (z0 + c * r) / (1.0 + c * c)
        bb = r - c * zs
        aa = c * bb
        for j in range(m):
            v = z[j] - x / sn if j < n else z[j]
            out[j] = bb * v / r
            if j < n:
                out[j] += aa / sn


def prox_nodes(double[:, ::1] Z, double[::1] lam, int kind, double a, double b, int n):
    cdef Py_ssize_t N = Z.shape[0], i
    cdef int m = Z.shape[1]
    out = np.empty((N, m))
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(N):
            _prox1(&Z[i, 0], lam[i], &o[i, 0], m, kind, a, b, n)
    return out


def prox_jacobian_nodes(double[:, ::1] Z, double[::1] lam, int kind, double a, double b, int n):
    cdef Py_ssize_t N = Z.shape[0], i
    cdef int m = Z.shape[1], j, k
    out = np.zeros((N, m, m))
    cdef double[:, :, ::1] J = out
    cdef double nz, thr, s, sn, x, r, c, x_a, z0, zs, ej, ek, vj, vk, dj, dk, pd
    cdef double d[6]
    with nogil:
        for i in range(N):
            if kind == 0:
                nz = 0.0
                for j in range(m):
                    nz += Z[i, j] * Z[i, j]
                nz = sqrt(nz)
                thr = lam[i] * a
                if nz > thr:
                    for j in range(m):
                        for k in range(m):
                            J[i, j, k] = thr * Z[i, j] * Z[i, k] / (nz * nz * nz)
                        J[i, j, j] += 1.0 - thr / nz
                continue
            sn = sqrt(<double>n)
            x = 0.0
            for j in range(n):
                x += Z[i, j]
            x /= sn
            r = 0.0
            for j in range(m):
                d[j] = Z[i, j] - x / sn if j < n else Z[i, j]
                r += d[j] * d[j]
            r = sqrt(r)
            c = a / sn
            x_a = lam[i] * b / c
            z0 = x_a - x
            if r <= c * z0:
                continue
            if c * r <= -z0:
                for j in range(m):
                    J[i, j, j] = 1.0
                continue
            zs = (z0 + c * r) / (1.0 + c * c)
            for j in range(m):
                ej = 1.0 / sn if j < n else 0.0
                dj = d[j] / r
                vj = c * dj - ej
                for k in range(m):
                    ek = 1.0 / sn if k < n else 0.0
                    dk = d[k] / r
                    vk = c * dk - ek
                    pd = (1.0 if j == k else 0.0) - ej * ek
                    J[i, j, k] = (1.0 if j == k else 0.0) - vj * vk / (1.0 + c * c) \
                        - (c * zs / r) * (pd - dj * dk)
    return out


def grid_scan(double[::1] center, double h, int npts, double[:, ::1] C, double[::1] eps,
              double bval, double lam_h, double[::1] p_prev, int kind, double a, double b, int n):
    cdef int i0, i1, i2, j, k
    cdef double best = INFINITY, val, hv
    cdef double p[3]
    cdef double r[3]
    cdef double q[3]
    cdef double bp[3]
    cdef double half = 0.5 * (npts - 1)
    bp[0] = center[0]; bp[1] = center[1]; bp[2] = center[2]
    with nogil:
        for i0 in range(npts):
            p[0] = center[0] + h * (i0 - half)
            for i1 in range(npts):
                p[1] = center[1] + h * (i1 - half)
                for i2 in range(npts):
                    p[2] = center[2] + h * (i2 - half)
                    val = 0.0
                    for j in range(3):
                        r[j] = eps[j] - p[j]
                    for j in range(3):
                        for k in range(3):
                            val += 0.5 * r[j] * C[j, k] * r[k]
                    for j in range(3):
                        val += bval * p[j] * p[j]
                    if lam_h != 0.0:
                        for j in range(3):
                            q[j] = p[j] - p_prev[j]
                        hv = _support1(q, 3, kind, a, b, n)
                        val += lam_h * hv
                    if val < best:
                        best = val
                        bp[0] = p[0]; bp[1] = p[1]; bp[2] = p[2]
    return best, np.array([bp[0], bp[1], bp[2]])
