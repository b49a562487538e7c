"""Pure numpy/scipy implementations of the hot loops.

These mirror ``_ckernels.pyx`` one for one and are used when the compiled
module is unavailable or ``CUSPLAB_BACKEND=python`` is set.
"""

import numpy as np
from scipy.signal import lfilter

NAME = "python"


def rk4_linear2(p, q, u, u_mid, dr, init, forward, limit):
    """Classical RK4 for ``y'' + p y' + q y = u`` on a uniform grid.

    State is carried in ``np.longdouble``; ``init`` is a length-2 longdouble
    array ``(y, y')`` at the starting end. Returns ``(y, yp, overflow_at)``
    with ``overflow_at = -1`` when no sample exceeded ``limit``.
    """
    n = u.shape[0]
    y = np.zeros(n)
    yp = np.zeros(n)
    ld = np.longdouble
    p = ld(p)
    q = ld(q)
    a = ld(init[0])
    b = ld(init[1])
    h = ld(dr) if forward else -ld(dr)
    half = h / 2
    sixth = h / 6
    if forward:
        idx, step = 0, 1
    else:
        idx, step = n - 1, -1
    y[idx] = a
    yp[idx] = b
    for _ in range(n - 1):
        nxt = idx + step
        u0 = ld(u[idx])
        u1 = ld(u[nxt])
        um = ld(u_mid[min(idx, nxt)])
        k1a = b
        k1b = u0 - p * b - q * a
        k2a = b + half * k1b
        k2b = um - p * k2a - q * (a + half * k1a)
        k3a = b + half * k2b
        k3b = um - p * k3a - q * (a + half * k2a)
        k4a = b + h * k3b
        k4b = u1 - p * k4a - q * (a + h * k3a)
        a = a + sixth * (k1a + 2 * k2a + 2 * k3a + k4a)
        b = b + sixth * (k1b + 2 * k2b + 2 * k3b + k4b)
        if not (abs(a) <= limit and abs(b) <= limit):
            return y, yp, nxt
        y[nxt] = a
        yp[nxt] = b
        idx = nxt
    return y, yp, -1


def exp_recurrence(factor, increments, forward):
    """Linear recurrence ``G[i+1] = factor*G[i] + inc[i]`` (or its mirror).

    Forward starts from ``G[0] = 0``; backward runs
    ``G[i] = factor*G[i+1] + inc[i]`` from ``G[n-1] = 0``.
    """
    inc = np.asarray(increments, dtype=float)
    out = np.zeros(inc.shape[0] + 1)
    if inc.shape[0] == 0:
        return out
    if forward:
        out[1:] = lfilter([1.0], [1.0, -factor], inc)
    else:
        out[:-1] = lfilter([1.0], [1.0, -factor], inc[::-1])[::-1]
    return out


def fd4(values, dr):
    """Fourth-order first and second differences along the last axis.

    ``values`` is a C-contiguous float array of shape (m, n) with n >= 5.
    Interior nodes use centered five-point stencils; the two nodes at each
    end use one-sided stencils (six points for the second derivative when
    available).
    """
    f = np.asarray(values, dtype=float)
    n = f.shape[-1]
    d1 = np.empty_like(f)
    d2 = np.empty_like(f)
    h1 = 12.0 * dr
    h2 = 12.0 * dr * dr
    d1[:, 2:-2] = (f[:, :-4] - 8 * f[:, 1:-3] + 8 * f[:, 3:-1] - f[:, 4:]) / h1
    d2[:, 2:-2] = (-f[:, :-4] + 16 * f[:, 1:-3] - 30 * f[:, 2:-2]
                   + 16 * f[:, 3:-1] - f[:, 4:]) / h2
    for side in (0, 1):
        g = f if side == 0 else f[:, ::-1]
        s = 1.0 if side == 0 else -1.0
        a0 = (-25 * g[:, 0] + 48 * g[:, 1] - 36 * g[:, 2] + 16 * g[:, 3] - 3 * g[:, 4]) / h1
        a1 = (-3 * g[:, 0] - 10 * g[:, 1] + 18 * g[:, 2] - 6 * g[:, 3] + g[:, 4]) / h1
        if n >= 6:
            b0 = (45 * g[:, 0] - 154 * g[:, 1] + 214 * g[:, 2] - 156 * g[:, 3]
                  + 61 * g[:, 4] - 10 * g[:, 5]) / h2
            b1 = (10 * g[:, 0] - 15 * g[:, 1] - 4 * g[:, 2] + 14 * g[:, 3]
                  - 6 * g[:, 4] + g[:, 5]) / h2
        else:
            b0 = (35 * g[:, 0] - 104 * g[:, 1] + 114 * g[:, 2] - 56 * g[:, 3] + 11 * g[:, 4]) / h2
            b1 = (11 * g[:, 0] - 20 * g[:, 1] + 6 * g[:, 2] + 4 * g[:, 3] - g[:, 4]) / h2
        if side == 0:
            d1[:, 0], d1[:, 1] = a0, a1
            d2[:, 0], d2[:, 1] = b0, b1
        else:
            d1[:, -1], d1[:, -2] = s * a0, s * a1
            d2[:, -1], d2[:, -2] = b0, b1
    return d1, d2
