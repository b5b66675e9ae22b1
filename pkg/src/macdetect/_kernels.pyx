# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-frequency kernels; mirrors ``macdetect._kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, cbrt, cos, acos, fabs, log1p, isnan, NAN, M_PI

cnp.import_array()

cdef double PAIR_MERGE = 1e-7
cdef double TINY_RATIO = 1e-100


cdef inline double _poly(double a3, double a2, double a1, double a0, double x) noexcept nogil:
    return ((a3 * x + a2) * x + a1) * x + a0


cdef inline double _polish(double a3, double a2, double a1, double a0, double x) noexcept nogil:
    cdef double f, fp, xn, fn
    cdef int it
    if isnan(x):
        return x
    for it in range(2):
        f = _poly(a3, a2, a1, a0, x)
        fp = (3.0 * a3 * x + 2.0 * a2) * x + a1
        if fp == 0.0:
            break
        xn = x - f / fp
        fn = _poly(a3, a2, a1, a0, xn)
        if fabs(fn) < fabs(f):
            x = xn
    return x


cdef inline void _sort3(double* r) noexcept nogil:
    # descending, NaN last
    cdef double t
    cdef int i, j
    for i in range(3):
        for j in range(2 - i):
            if isnan(r[j]) or (not isnan(r[j + 1]) and r[j + 1] > r[j]):
                t = r[j]
                r[j] = r[j + 1]
                r[j + 1] = t


cdef void _cubic(double a3, double a2, double a1, double a0, double* r) noexcept nogil:
    cdef double b = a2 / a3, c = a1 / a3, d = a0 / a3
    cdef double s = fabs(b)
    cdef double B, C, D, p, q, disc, shift, pp, rr, arg, theta, qq, sq, A, Bc, yr, re, im
    cdef int k
    if sqrt(fabs(c)) > s:
        s = sqrt(fabs(c))
    if cbrt(fabs(d)) > s:
        s = cbrt(fabs(d))
    if s <= 0.0:
        s = 1.0
    B = b / s
    C = c / (s * s)
    D = d / (s * s * s)
    p = C - B * B / 3.0
    q = 2.0 * B * B * B / 27.0 - B * C / 3.0 + D
    disc = (q / 2.0) * (q / 2.0) + (p / 3.0) * (p / 3.0) * (p / 3.0)
    shift = -B / 3.0
    r[0] = NAN
    r[1] = NAN
    r[2] = NAN
    if disc <= 0.0:
        pp = p if p < 0.0 else 0.0
        rr = 2.0 * sqrt(-pp / 3.0)
        arg = 3.0 * q / (pp * rr) if pp < 0.0 else 0.0
        if arg > 1.0:
            arg = 1.0
        elif arg < -1.0:
            arg = -1.0
        theta = acos(arg) / 3.0
        for k in range(3):
            r[k] = rr * cos(theta - 2.0 * M_PI * k / 3.0) + shift
    else:
        qq = q
        sq = sqrt(disc)
        if qq > 0:
            A = -cbrt(fabs(qq) / 2.0 + sq)
        elif qq < 0:
            A = cbrt(fabs(qq) / 2.0 + sq)
        else:
            A = cbrt(sq)
        Bc = -p / (3.0 * A) if A != 0.0 else 0.0
        yr = A + Bc
        re = -yr / 2.0
        im = sqrt(3.0) / 2.0 * fabs(A - Bc)
        r[0] = yr + shift
        if im <= PAIR_MERGE * (1.0 if fabs(re) < 1.0 else fabs(re)):
            r[1] = re + shift
            r[2] = re + shift
    for k in range(3):
        r[k] = _polish(a3, a2, a1, a0, r[k] * s)
    _sort3(r)


def cubic_roots(a3, a2, a1, a0):
    cdef cnp.ndarray[double, ndim=1] A3, A2, A1, A0
    b = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (a3, a2, a1, a0)))
    shape = b[0].shape
    A3 = np.ascontiguousarray(b[0]).ravel()
    A2 = np.ascontiguousarray(b[1]).ravel()
    A1 = np.ascontiguousarray(b[2]).ravel()
    A0 = np.ascontiguousarray(b[3]).ravel()
    cdef Py_ssize_t m = A3.shape[0], i
    out = np.empty((m, 3))
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(m):
            _cubic(A3[i], A2[i], A1[i], A0[i], &o[i, 0])
    return out.reshape(shape + (3,))


cdef inline double _gain(double xi, double phi, double v, double w) noexcept nogil:
    cdef double h0 = v * xi + w
    cdef double h1 = (phi + v) * xi + w
    return phi * phi * w * xi / (h0 * h1 * h1)


cdef inline double _info(double g) noexcept nogil:
    cdef double acc
    cdef int k
    if fabs(g) < 1e-3:
        acc = 0.0
        for k in range(8, 1, -1):
            acc = acc * g + (1.0 if k % 2 == 0 else -1.0) * (k - 1) / (<double>k)
        return acc * g * g
    return log1p(g) - g / (1.0 + g)


cdef inline double _tangent_gap(double x, double phi, double v, double w) noexcept nogil:
    return x * _gain(x, phi, v, w) - _info(x * phi / (x * v + w))


def oep_entry(phi, double v, double w, bint lagrangian=True):
    cdef cnp.ndarray[double, ndim=1] P = np.ascontiguousarray(phi, dtype=float).ravel()
    cdef Py_ssize_t n = P.shape[0], i
    lam_e = np.zeros(n)
    xi_e = np.zeros(n)
    cdef double[::1] L = lam_e
    cdef double[::1] X = xi_e
    cdef double p, Q, xd, lo, hi, x, xn, g, dg, step, h0, h1
    cdef int it
    with nogil:
        for i in range(n):
            p = P[i]
            if p <= 0.0:
                continue
            Q = p + v
            xd = 2.0 * w / (Q + sqrt(Q * Q + 8.0 * v * Q))
            if not lagrangian:
                X[i] = xd
                L[i] = _gain(xd, p, v, w)
                continue
            if p < TINY_RATIO * v:
                # the tangent gap underflows; its limit for phi/v -> 0 is x = w/v
                X[i] = w / v
                L[i] = _gain(X[i], p, v, w)
                continue
            lo = xd
            hi = 2.0 * xd
            for it in range(200):
                if _tangent_gap(hi, p, v, w) > 0:
                    lo = hi
                    hi = 2.0 * hi
                else:
                    break
            # safeguarded Newton on the tangent gap, slope x I''(x)
            x = sqrt(lo * hi)
            for it in range(100):
                g = _tangent_gap(x, p, v, w)
                if g > 0:
                    lo = x
                else:
                    hi = x
                h0 = v * x + w
                h1 = (p + v) * x + w
                dg = _gain(x, p, v, w) * (1.0 - x * v / h0 - 2.0 * x * (p + v) / h1)
                step = g / dg if dg != 0.0 else 0.0
                xn = x - step
                if not (lo < xn < hi) or dg == 0.0:
                    xn = sqrt(lo * hi)
                if fabs(xn - x) <= 1e-15 * x or hi - lo <= 4e-16 * hi:
                    x = xn
                    break
                x = xn
            X[i] = x
            L[i] = _gain(X[i], p, v, w)
    shape = np.shape(phi)
    return lam_e.reshape(shape), xi_e.reshape(shape)


def oep_allocate(phi, double lam, double v, double w, lam_entry, xi_entry):
    cdef cnp.ndarray[double, ndim=1] P = np.ascontiguousarray(phi, dtype=float).ravel()
    cdef cnp.ndarray[double, ndim=1] LE = np.ascontiguousarray(lam_entry, dtype=float).ravel()
    cdef cnp.ndarray[double, ndim=1] XE = np.ascontiguousarray(xi_entry, dtype=float).ravel()
    cdef Py_ssize_t n = P.shape[0], i
    out = np.zeros(n)
    cdef double[::1] o = out
    cdef double r[3]
    cdef double p, a3, a2, a1, a0, top
    with nogil:
        for i in range(n):
            if LE[i] <= 0.0 or lam > LE[i]:
                continue
            p = P[i]
            a3 = lam * v * (p + v) * (p + v)
            a2 = lam * w * (p * p + 4.0 * p * v + 3.0 * v * v)
            a1 = w * (-p * p + lam * w * (2.0 * p + 3.0 * v))
            a0 = lam * w * w * w
            _cubic(a3, a2, a1, a0, r)
            top = r[0]
            if isnan(top) or top < XE[i]:
                top = XE[i]
            o[i] = top
    return out.reshape(np.shape(phi))
