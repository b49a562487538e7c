# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in ``_pykernels``."""

import numpy as np

NAME = "cython"

cdef extern from "math.h":
    long double fabsl(long double x) nogil


def rk4_linear2(double p, double q, const double[::1] u, const double[::1] u_mid,
                double dr, const long double[::1] init, bint forward, double limit):
    """Classical RK4 for ``y'' + p y' + q y = u``; see ``_pykernels.rk4_linear2``."""
    cdef Py_ssize_t n = u.shape[0]
    y = np.zeros(n)
    yp = np.zeros(n)
    cdef double[::1] yv = y
    cdef double[::1] ypv = yp
    cdef long double lp = p, lq = q
    cdef long double a = init[0], b = init[1]
    cdef long double h = dr if forward else -dr
    cdef long double half = h / 2, sixth = h / 6, lim = limit
    cdef long double u0, u1, um, k1a, k1b, k2a, k2b, k3a, k3b, k4a, k4b
    cdef Py_ssize_t idx, nxt, step, it, overflow = -1
    if forward:
        idx = 0
        step = 1
    else:
        idx = n - 1
        step = -1
    yv[idx] = <double>a
    ypv[idx] = <double>b
    with nogil:
        for it in range(n - 1):
            nxt = idx + step
            u0 = u[idx]
            u1 = u[nxt]
            um = u_mid[idx if idx < nxt else nxt]
            k1a = b
            k1b = u0 - lp * b - lq * a
            k2a = b + half * k1b
            k2b = um - lp * k2a - lq * (a + half * k1a)
            k3a = b + half * k2b
            k3b = um - lp * k3a - lq * (a + half * k2a)
            k4a = b + h * k3b
            k4b = u1 - lp * k4a - lq * (a + h * k3a)
            a = a + sixth * (k1a + 2 * k2a + 2 * k3a + k4a)
            b = b + sixth * (k1b + 2 * k2b + 2 * k3b + k4b)
            if not (fabsl(a) <= lim and fabsl(b) <= lim):
                overflow = nxt
                break
            yv[nxt] = <double>a
            ypv[nxt] = <double>b
            idx = nxt
    return y, yp, overflow


def exp_recurrence(double factor, const double[::1] increments, bint forward):
    """Linear recurrence ``G[i+1] = factor*G[i] + inc[i]`` (or its mirror)."""
    cdef Py_ssize_t m = increments.shape[0], i
    out = np.zeros(m + 1)
    cdef double[::1] g = out
    with nogil:
        if forward:
            for i in range(m):
                g[i + 1] = factor * g[i] + increments[i]
        else:
            for i in range(m - 1, -1, -1):
                g[i] = factor * g[i + 1] + increments[i]
    return out


def fd4(const double[:, ::1] f, double dr):
    """Fourth-order first and second differences along the last axis."""
    cdef Py_ssize_t m = f.shape[0], n = f.shape[1], i, j, k
    d1 = np.empty((m, n))
    d2 = np.empty((m, n))
    cdef double[:, ::1] o1 = d1
    cdef double[:, ::1] o2 = d2
    cdef double h1 = 12.0 * dr, h2 = 12.0 * dr * dr
    cdef double g0, g1, g2, g3, g4, g5, a0, a1, b0, b1
    with nogil:
        for i in range(m):
            for j in range(2, n - 2):
                o1[i, j] = (f[i, j - 2] - 8 * f[i, j - 1] + 8 * f[i, j + 1] - f[i, j + 2]) / h1
                o2[i, j] = (-f[i, j - 2] + 16 * f[i, j - 1] - 30 * f[i, j]
                            + 16 * f[i, j + 1] - f[i, j + 2]) / h2
            for k in range(2):
                if k == 0:
                    g0 = f[i, 0]; g1 = f[i, 1]; g2 = f[i, 2]; g3 = f[i, 3]; g4 = f[i, 4]
                    g5 = f[i, 5] if n >= 6 else 0.0
                else:
                    g0 = f[i, n - 1]; g1 = f[i, n - 2]; g2 = f[i, n - 3]; g3 = f[i, n - 4]
                    g4 = f[i, n - 5]
                    g5 = f[i, n - 6] if n >= 6 else 0.0
                a0 = (-25 * g0 + 48 * g1 - 36 * g2 + 16 * g3 - 3 * g4) / h1
                a1 = (-3 * g0 - 10 * g1 + 18 * g2 - 6 * g3 + g4) / h1
                if n >= 6:
                    b0 = (45 * g0 - 154 * g1 + 214 * g2 - 156 * g3 + 61 * g4 - 10 * g5) / h2
                    b1 = (10 * g0 - 15 * g1 - 4 * g2 + 14 * g3 - 6 * g4 + g5) / h2
                else:
                    b0 = (35 * g0 - 104 * g1 + 114 * g2 - 56 * g3 + 11 * g4) / h2
                    b1 = (11 * g0 - 20 * g1 + 6 * g2 + 4 * g3 - g4) / h2
                if k == 0:
                    o1[i, 0] = a0; o1[i, 1] = a1
                    o2[i, 0] = b0; o2[i, 1] = b1
                else:
                    o1[i, n - 1] = -a0; o1[i, n - 2] = -a1
                    o2[i, n - 1] = b0; o2[i, n - 2] = b1
    return d1, d2
