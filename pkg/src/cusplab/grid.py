"""Uniform radial grids, finite differences and radial quadrature."""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ._backend import kernels
from .errors import DataError, GridError

# Trapezoid end corrections are exact for polynomials below this degree.
GREGORY_ORDER = 6


@dataclass(frozen=True)
class RadialGrid:
    """Uniform grid ``r_i = i*dr`` on ``[0, R]``.

    Parameters
    ----------
    R : float
        Radial extent, must be a positive multiple of ``dr`` (to 1e-9).
    dr : float
        Grid step.
    """

    R: float
    dr: float
    r: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.dr > 0 and np.isfinite(self.dr)):
            raise GridError(f"grid step must be positive, got {self.dr}")
        if not (self.R > 0 and np.isfinite(self.R)):
            raise GridError(f"radial extent must be positive, got {self.R}")
        steps = self.R / self.dr
        n = int(round(steps))
        if abs(steps - n) > 1e-9 * max(1.0, steps):
            raise GridError(f"R={self.R} is not a multiple of dr={self.dr}")
        r = np.arange(n + 1) * self.dr
        r.setflags(write=False)
        object.__setattr__(self, "r", r)

    @property
    def n(self):
        return self.r.shape[0]

    def index(self, r):
        """Grid index of radius ``r``; raises if ``r`` is not a node."""
        i = int(round(r / self.dr))
        if i < 0 or i >= self.n or abs(self.r[i] - r) > 1e-9 * max(1.0, abs(r)):
            raise GridError(f"r={r} is not a grid node")
        return i

    def truncated(self, R):
        """Grid with the same step on the shorter interval ``[0, R]``."""
        return RadialGrid(R, self.dr)


def radial_derivatives(values, dr):
    """First and second radial derivatives to fourth order.

    ``values`` may be real or complex with the radial axis last.
    """
    v = np.asarray(values)
    n = v.shape[-1]
    if n < 5:
        raise GridError(f"need at least 5 radial nodes for second derivatives, got {n}")
    if np.iscomplexobj(v):
        r1, r2 = radial_derivatives(v.real, dr)
        i1, i2 = radial_derivatives(v.imag, dr)
        return r1 + 1j * i1, r2 + 1j * i2
    flat = np.ascontiguousarray(v.reshape(-1, n), dtype=float)
    d1, d2 = kernels.fd4(flat, float(dr))
    return np.asarray(d1).reshape(v.shape), np.asarray(d2).reshape(v.shape)


def midpoint_values(u):
    """Four-point cubic interpolation of samples to interval midpoints."""
    u = np.asarray(u, dtype=float)
    n = u.shape[0]
    if n < 4:
        return 0.5 * (u[:-1] + u[1:])
    mid = np.empty(n - 1)
    mid[1:-1] = (-u[:-3] + 9 * u[1:-2] + 9 * u[2:-1] - u[3:]) / 16
    mid[0] = (5 * u[0] + 15 * u[1] - 5 * u[2] + u[3]) / 16
    mid[-1] = (5 * u[-1] + 15 * u[-2] - 5 * u[-3] + u[-4]) / 16
    return mid


@lru_cache(maxsize=None)
def _gregory_corrections(order):
    # Solve sum_j c_j j^p = B_{p+1}/(p+1) (odd p), 0 (even p), p < order.
    bern = {2: 1 / 6, 4: -1 / 30, 6: 1 / 42, 8: -1 / 30, 10: 5 / 66}
    j = np.arange(order, dtype=float)
    mat = np.vstack([j ** p for p in range(order)])
    rhs = np.array([bern[p + 1] / (p + 1) if p % 2 == 1 else 0.0 for p in range(order)])
    return np.linalg.solve(mat, rhs)


@lru_cache(maxsize=64)
def _quadrature_weights(n, dr):
    if n < 2:
        return np.zeros(n)
    w = np.full(n, dr)
    w[0] = w[-1] = dr / 2
    if n >= 2 * GREGORY_ORDER:
        c = _gregory_corrections(GREGORY_ORDER)
        w[:GREGORY_ORDER] += dr * c
        w[n - GREGORY_ORDER:] += dr * c[::-1]
    w.setflags(write=False)
    return w


def quadrature_weights(n, dr):
    """End-corrected trapezoid weights (Gregory rule) on ``n`` uniform nodes.

    Interior weights are ``dr``; the first and last ``GREGORY_ORDER`` nodes
    carry Euler-Maclaurin corrections so smooth integrands are integrated to
    sixth order. Falls back to plain trapezoid on very short grids.
    """
    return _quadrature_weights(int(n), float(dr))


def integrate(samples, dr, axis=-1):
    """Integrate uniform samples over the radial axis with Gregory weights."""
    s = np.asarray(samples, dtype=float)
    if not np.all(np.isfinite(s)):
        raise DataError("non-finite samples in radial integrand")
    w = quadrature_weights(s.shape[axis], dr)
    return np.tensordot(s, w, axes=([axis], [0]))


def trapezoid(samples, dr):
    """Plain trapezoid rule on uniform samples."""
    return float(np.trapezoid(np.asarray(samples, dtype=float), dx=dr))
