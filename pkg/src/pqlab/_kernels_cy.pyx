# Fused compiled versions of the grid kernels; see _kernels_py for the
# reference semantics and the array conventions.

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, floor, pow, sqrt

cnp.import_array()

# Every exponent the package actually uses is a multiple of 1/4 (r and r/2
# for r in {1.5, 2, 3, ...}), so x^e reduces to integer powers of x^(1/4).
# Two sqrts plus a handful of multiplies beat libm pow by ~3x, which is the
# whole point of the compiled core.  _quarter() classifies the exponent once
# per call; the sentinel routes odd exponents (and x == 0, to keep pow's
# 0^negative -> inf semantics) through libm.

DEF NOT_QUARTER = -1000


cdef inline int _quarter(double e) nogil:
    cdef double k4 = 4.0 * e
    if k4 == floor(k4) and fabs(k4) <= 64.0:
        return <int>k4
    return NOT_QUARTER


cdef inline double _powi(double b, int k) nogil:
    cdef double acc = 1.0
    while k:
        if k & 1:
            acc *= b
        b *= b
        k >>= 1
    return acc


cdef inline double _qpow(double x, double e, int k4) nogil:
    cdef double s
    if k4 != NOT_QUARTER and x > 0.0:
        s = sqrt(sqrt(x))
        if k4 >= 0:
            return _powi(s, k4)
        return 1.0 / _powi(s, -k4)
    return pow(x, e)


def grad_pow_sum_1d(double[::1] u, double h, double r, double eps=0.0):
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t i
    cdef double acc = 0.0
    cdef double g, prev = 0.0
    cdef double e = r if eps == 0.0 else 0.5 * r
    cdef int k4 = _quarter(e)
    if n == 0:
        return 0.0
    for i in range(n + 1):
        if i < n:
            g = (u[i] - prev) / h
            prev = u[i]
        else:
            g = (0.0 - prev) / h
        if eps == 0.0:
            acc += _qpow(fabs(g), e, k4)
        else:
            acc += _qpow(g * g + eps, e, k4)
    return acc * h


def grad_pow_grad_1d(double[::1] u, double h, double r, double eps,
                     double coef, double[::1] out):
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t i
    cdef double g, flux, prev_flux = 0.0, prev_u = 0.0
    cdef double c = coef * r
    cdef double e = 0.5 * (r - 2.0)
    cdef int k4 = _quarter(e)
    if n == 0:
        return np.asarray(out)
    for i in range(n + 1):
        if i < n:
            g = (u[i] - prev_u) / h
            prev_u = u[i]
        else:
            g = (0.0 - prev_u) / h
        flux = _qpow(g * g + eps, e, k4) * g
        if i > 0:
            out[i - 1] += c * (prev_flux - flux)
        prev_flux = flux
    return np.asarray(out)


def grad_pow_sum_2d(double[:, ::1] u, double h, double r, double eps=0.0):
    cdef Py_ssize_t ny = u.shape[0], nx = u.shape[1]
    cdef Py_ssize_t i, j
    cdef double gx, gy, ub, ue, us
    cdef double acc = 0.0
    cdef double e = 0.5 * r
    cdef int k4 = _quarter(e)
    # cells based at padded pixel (i, j), i = 0..ny, j = 0..nx
    for i in range(ny + 1):
        for j in range(nx + 1):
            ub = u[i - 1, j - 1] if (0 < i <= ny and 0 < j <= nx) else 0.0
            ue = u[i - 1, j] if (0 < i <= ny and j < nx) else 0.0
            us = u[i, j - 1] if (i < ny and 0 < j <= nx) else 0.0
            gx = (ue - ub) / h
            gy = (us - ub) / h
            acc += _qpow(gx * gx + gy * gy + eps, e, k4)
    return acc * h * h


def grad_pow_grad_2d(double[:, ::1] u, double h, double r, double eps,
                     double coef, double[:, ::1] out):
    cdef Py_ssize_t ny = u.shape[0], nx = u.shape[1]
    cdef Py_ssize_t i, j
    cdef double gx, gy, w, fx, fy, ub, ue, us
    cdef double c = coef * r * h
    cdef double e = 0.5 * (r - 2.0)
    cdef int k4 = _quarter(e)
    for i in range(ny + 1):
        for j in range(nx + 1):
            ub = u[i - 1, j - 1] if (0 < i <= ny and 0 < j <= nx) else 0.0
            ue = u[i - 1, j] if (0 < i <= ny and j < nx) else 0.0
            us = u[i, j - 1] if (i < ny and 0 < j <= nx) else 0.0
            gx = (ue - ub) / h
            gy = (us - ub) / h
            w = _qpow(gx * gx + gy * gy + eps, e, k4)
            fx = w * gx
            fy = w * gy
            # base node (i-1, j-1): -(fx + fy); east node (i-1, j): +fx;
            # south node (i, j-1): +fy
            if 0 < i <= ny and 0 < j <= nx:
                out[i - 1, j - 1] -= c * (fx + fy)
            if 0 < i <= ny and j < nx:
                out[i - 1, j] += c * fx
            if i < ny and 0 < j <= nx:
                out[i, j - 1] += c * fy
    return np.asarray(out)


def abs_pow_sum(u, double r):
    cdef double[::1] v = np.ascontiguousarray(u).ravel()
    cdef Py_ssize_t i, n = v.shape[0]
    cdef double acc = 0.0
    cdef int k4 = _quarter(r)
    for i in range(n):
        acc += _qpow(fabs(v[i]), r, k4)
    return acc


def abs_pow_grad(u, double r, double coef, out):
    cdef double[::1] v = np.ascontiguousarray(u).ravel()
    cdef double[::1] o = out.reshape(-1)
    cdef Py_ssize_t i, n = v.shape[0]
    cdef double c = coef * r, x
    cdef double e = r - 1.0
    cdef int k4 = _quarter(e)
    for i in range(n):
        x = v[i]
        if x > 0.0:
            o[i] += c * _qpow(x, e, k4)
        elif x < 0.0:
            o[i] -= c * _qpow(-x, e, k4)
    return out
