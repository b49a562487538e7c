"""Scalar constant-coefficient ODEs ``y'' + p y' + q y = u`` and rate lemmas.

Characteristic roots are returned in extended precision (``np.longdouble``)
so that homogeneous initial data built from them does not excite the other
mode at double rounding level. The initial-value integrator carries its
state in extended precision for the same reason.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import linprog

from ._backend import kernels
from .errors import (DecompositionError, GridError, HypothesisViolation, ODEOverflowError,
                     ResonanceError)
from .grid import midpoint_values, trapezoid

RESONANCE_TOL = 1e-6
OVERFLOW_LIMIT = 1e300


@dataclass(frozen=True)
class QuadraticODE:
    """``Q(X) = X^2 + p X + q`` with two distinct real roots.

    Parameters
    ----------
    p, q : float
    kind : {"half_line", "interval"}
        ``half_line`` is ``[0, R]`` (truncated half line), ``interval`` is
        ``[0, R - 1]``.
    R : float, optional
        Truncation parameter; only used by :meth:`extent`.
    """

    p: float
    q: float
    kind: str = "half_line"
    R: float = 20.0

    def __post_init__(self):
        if self.kind not in ("half_line", "interval"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if not (np.isfinite(self.p) and np.isfinite(self.q)):
            raise HypothesisViolation("coefficients must be finite")
        if self.p * self.p - 4 * self.q <= 0:
            raise HypothesisViolation(
                f"X^2 + {self.p}X + {self.q} needs two distinct real roots "
                f"(discriminant {self.p * self.p - 4 * self.q})")

    @classmethod
    def from_roots(cls, l1, l2, **kw):
        return cls(-(float(l1) + float(l2)), float(l1) * float(l2), **kw)

    def extent(self):
        return self.R if self.kind == "half_line" else self.R - 1

    def __call__(self, x):
        return x * x + self.p * x + self.q


# The three scalar families of the cusp operator.
Q1 = QuadraticODE(-2.0, -4.0)
Q2 = QuadraticODE(-2.0, -3.0)
Q3 = QuadraticODE(-2.0, 0.0)


@lru_cache(maxsize=256)
def _roots(p, q):
    ld = np.longdouble
    p, q = ld(p), ld(q)
    disc = p * p - 4 * q
    if disc <= 0:
        raise HypothesisViolation(f"discriminant {float(disc)} is not positive")
    sq = np.sqrt(disc)
    # Avoid cancellation: compute the larger-magnitude root first.
    t = -(p + sq) / 2 if p >= 0 else (-p + sq) / 2
    other = q / t
    return (t, other) if t < other else (other, t)


def roots(ode):
    """Ordered characteristic roots ``(lambda1, lambda2)`` in extended precision."""
    return _roots(float(ode.p), float(ode.q))


def _check_resonance(ode, rate, what="forcing rate"):
    for lam in roots(ode):
        if abs(float(rate) - float(lam)) < RESONANCE_TOL:
            raise ResonanceError(f"{what} {float(rate)} resonates with root {float(lam)}")


@dataclass(frozen=True)
class IVPSolution:
    """Samples of ``y`` and ``y'`` on the grid."""

    y: np.ndarray
    yp: np.ndarray


def solve_ivp(ode, u, y0, y0p, dr, direction="forward"):
    """Integrate ``y'' + p y' + q y = u`` by classical RK4.

    Parameters
    ----------
    ode : QuadraticODE
    u : array_like
        Forcing samples on the uniform grid (at least 2 nodes).
    y0, y0p : float or np.longdouble
        Value and derivative at the starting end: ``r = 0`` for
        ``direction="forward"``, the last node for ``"backward"``.
    dr : float
        Grid step.
    direction : {"forward", "backward"}

    Returns
    -------
    IVPSolution

    Raises
    ------
    ODEOverflowError
        When ``|y|`` or ``|y'|`` exceeds 1e300; integrate the growing mode in
        the other direction instead.
    """
    u = np.ascontiguousarray(u, dtype=float)
    if u.ndim != 1 or u.shape[0] < 2:
        raise GridError("forcing must be a 1D array with at least 2 samples")
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be forward or backward, got {direction!r}")
    init = np.array([y0, y0p], dtype=np.longdouble)
    mid = np.ascontiguousarray(midpoint_values(u))
    y, yp, bad = kernels.rk4_linear2(float(ode.p), float(ode.q), u, mid, float(dr), init,
                                     direction == "forward", OVERFLOW_LIMIT)
    if bad >= 0:
        raise ODEOverflowError(f"solution exceeded {OVERFLOW_LIMIT:g} at node {bad}; "
                               "integrate growing modes in the stable direction", bad)
    return IVPSolution(np.asarray(y), np.asarray(yp))


# --- variation of parameters ----------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


@lru_cache(maxsize=128)
def _increment_weights(lam, dr, backward):
    """Weights turning 4 samples into one interval integral of the exponential kernel.

    Forward: ``int_0^dr e^{lam (dr - t)} u(r_i + t) dt``; backward:
    ``int_0^dr e^{-lam t} u(r_i + t) dt``. ``u`` is replaced by its local
    cubic interpolant on three stencil placements (left end, interior,
    right end).
    """
    t = 0.5 * dr * (_GL_X + 1)
    wq = 0.5 * dr * _GL_W
    kern = np.exp(-lam * t) if backward else np.exp(lam * (dr - t))
    out = []
    for offsets in ((0, 1, 2, 3), (-1, 0, 1, 2), (-2, -1, 0, 1)):
        nodes = np.array(offsets, dtype=float) * dr
        w = []
        for j in range(4):
            others = np.delete(nodes, j)
            basis = np.prod([(t - o) / (nodes[j] - o) for o in others], axis=0)
            w.append(np.sum(wq * kern * basis))
        out.append(np.array(w))
    return tuple(out)


def exponential_convolution(u, lam, dr):
    """``g`` with ``g' = lam g + u``, chosen in the stable direction.

    For ``lam <= 0`` returns ``int_0^r e^{lam (r-s)} u(s) ds``; for
    ``lam > 0`` returns ``-int_r^R e^{lam (r-s)} u(s) ds``.
    """
    u = np.asarray(u, dtype=float)
    n = u.shape[0]
    if n < 4:
        raise GridError("variation of parameters needs at least 4 nodes")
    lam = float(lam)
    backward = lam > 0
    wl, wi, wr = _increment_weights(lam, float(dr), backward)
    inc = np.empty(n - 1)
    inc[0] = wl @ u[0:4]
    if n > 4:
        idx = np.arange(1, n - 2)
        stack = np.stack([u[idx - 1], u[idx], u[idx + 1], u[idx + 2]])
        inc[1:n - 2] = wi @ stack
    inc[n - 2] = wr @ u[n - 4:n]
    if backward:
        return np.asarray(kernels.exp_recurrence(float(np.exp(-lam * dr)), -inc, False))
    return np.asarray(kernels.exp_recurrence(float(np.exp(lam * dr)), inc, True))


def particular_solution(ode, u, dr):
    """Dichotomy-respecting particular solution and its derivative.

    Returns ``(y, y', y'')`` where ``y`` contains no multiple of the
    fundamental solution that grows towards the far end.
    """
    l1, l2 = (float(x) for x in roots(ode))
    g1 = exponential_convolution(u, l1, dr)
    g2 = exponential_convolution(u, l2, dr)
    gap = l2 - l1
    y = (g2 - g1) / gap
    yp = (l2 * g2 - l1 * g1) / gap
    ypp = np.asarray(u, dtype=float) - ode.p * yp - ode.q * y
    return y, yp, ypp


# --- rate decompositions -----------------------------------------------------

@dataclass(frozen=True)
class GrowthEnvelope:
    """Forcing envelope ``sum beta_k e^{mu_k r}`` plus an optional L1 term.

    Parameters
    ----------
    terms : sequence of (beta, mu)
    l1 : (a, psi) or None
        Rate ``a`` and nonnegative samples ``psi`` for the term
        ``||psi||_L1 e^{a r}``.
    """

    terms: tuple = ()
    l1: tuple = None

    def __post_init__(self):
        terms = tuple((float(b), float(m)) for b, m in self.terms)
        for b, m in terms:
            if not (b >= 0 and np.isfinite(b) and np.isfinite(m)):
                raise HypothesisViolation(f"envelope term ({b}, {m}) must have finite beta >= 0")
        object.__setattr__(self, "terms", terms)
        if self.l1 is not None:
            a, psi = self.l1
            psi = np.array(psi, dtype=float)
            if not np.all(np.isfinite(psi)) or np.any(psi < 0):
                raise HypothesisViolation("psi must be finite and nonnegative")
            psi.setflags(write=False)
            object.__setattr__(self, "l1", (float(a), psi))

    def rates(self):
        out = [m for _, m in self.terms]
        if self.l1 is not None:
            out.append(self.l1[0])
        return out

    def check_nonresonant(self, ode):
        for m in self.rates():
            _check_resonance(ode, m, "envelope rate")

    def psi_l1(self, dr):
        return 0.0 if self.l1 is None else trapezoid(self.l1[1], dr)

    def parts(self, r, dr):
        """Envelope pieces at the nodes ``r``: list of arrays, one per term."""
        out = [b * np.exp(m * r) for b, m in self.terms]
        if self.l1 is not None:
            out.append(self.psi_l1(dr) * np.exp(self.l1[0] * r))
        return out

    def values(self, r, dr):
        parts = self.parts(r, dr)
        return np.sum(parts, axis=0) if parts else np.zeros_like(r)


@dataclass(frozen=True, eq=False)
class RateDecomposition:
    """``y = A1 e^{l1 r} + A2 e^{l2 r} + residual`` with certified envelope.

    ``constants`` holds one certified constant per envelope term (the L1
    term last, if present); with the equal split they coincide.
    """

    A1: float
    A2: float
    lambdas: tuple
    constants: tuple
    residual: np.ndarray = field(repr=False)
    envelope: np.ndarray = field(repr=False)
    worst_index: int = -1

    @property
    def constant(self):
        return self.constants[0] if self.constants else 0.0

    def homogeneous(self, r):
        l1, l2 = self.lambdas
        return self.A1 * np.exp(l1 * r) + self.A2 * np.exp(l2 * r)


def _weighted_fit(r, y, lams, weight, nuisance=()):
    """Weighted least squares for the coefficients of ``e^{lam r}``.

    ``nuisance`` rates are fitted alongside but their share stays in the
    remainder; this keeps envelope-shaped forcing responses out of A1, A2.
    """
    rates = list(lams)
    for m in nuisance:
        if all(abs(m - x) > 1e-9 for x in rates):
            rates.append(m)
    cols = np.stack([np.exp(lam * r) for lam in rates], axis=1) * weight[:, None]
    scale = np.linalg.norm(cols, axis=0)
    scale[scale == 0] = 1.0
    coef, *_ = np.linalg.lstsq(cols / scale, y * weight, rcond=None)
    return (coef / scale)[:len(lams)]


def _minimax_fit(r, y, lams, envv, start):
    """Coefficients minimizing ``max |y - A1 e^{l1 r} - A2 e^{l2 r}| / envelope``.

    Solved as a linear program for the correction to ``start``; the result
    is kept only if it does not raise the sup ratio.
    """
    base = y - sum(a * np.exp(lam * r) for a, lam in zip(start, lams))
    a = base / envv
    cols = np.stack([np.exp(lam * r) / envv for lam in lams], axis=1)
    scale = np.abs(cols).max(axis=0)
    scale[~(scale > 0) | ~np.isfinite(scale)] = 1.0
    cols = cols / scale
    n = a.size
    ones = np.ones((n, 1))
    a_ub = np.vstack([np.hstack([cols, -ones]), np.hstack([-cols, -ones])])
    b_ub = np.concatenate([a, -a])
    res = linprog([0.0, 0.0, 1.0], A_ub=a_ub, b_ub=b_ub, bounds=[(None, None)] * 3,
                  method="highs")
    if res.status != 0:
        return start
    delta = res.x[:2] / scale
    if np.max(np.abs(a - cols @ res.x[:2])) >= np.max(np.abs(a)):
        return start
    return tuple(float(s + d) for s, d in zip(start, delta))


def decompose_growth(y, ode, env, dr, atol=None, max_constant=np.inf, fit="lsq"):
    """Split ``y`` into fundamental solutions plus a certified remainder.

    ``A1, A2`` come from least squares weighted by ``1/envelope``, with the
    envelope rates fitted alongside as nuisance columns; the remainder
    (including the nuisance share) is certified by the smallest common constant ``c`` with
    ``|residual| <= c * envelope`` at every node.

    Parameters
    ----------
    y : array_like
        Samples on ``r_i = i*dr``.
    ode : QuadraticODE
    env : GrowthEnvelope
    dr : float
    atol : float, optional
        With an identically zero envelope the residual must stay below this
        (default ``1e-10 * max|y|``).
    max_constant : float
        Certification fails when the constant exceeds this.
    fit : {"lsq", "minimax"}
        ``"minimax"`` refines the least-squares coefficients to the ones
        with the smallest certified constant (not linear in ``y``).

    Raises
    ------
    ResonanceError
        An envelope rate lies within 1e-6 of a root.
    DecompositionError
        No finite constant certifies the remainder.
    """
    if fit not in ("lsq", "minimax"):
        raise ValueError(f"unknown fit {fit!r}")
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise DecompositionError("non-finite samples")
    env.check_nonresonant(ode)
    r = np.arange(y.shape[0]) * dr
    lams = tuple(float(x) for x in roots(ode))
    envv = env.values(r, dr)
    nterms = len(env.terms) + (env.l1 is not None)
    zero_env = not np.any(envv > 0)
    if zero_env:
        weight = np.ones_like(r)
    else:
        floor = envv[envv > 0].min()
        weight = 1.0 / np.maximum(envv, floor)
    A1, A2 = _weighted_fit(r, y, lams, weight, env.rates())
    if fit == "minimax" and not zero_env and np.all(envv > 0):
        A1, A2 = _minimax_fit(r, y, lams, envv, (A1, A2))
    resid = y - A1 * np.exp(lams[0] * r) - A2 * np.exp(lams[1] * r)
    absr = np.abs(resid)
    if zero_env:
        tol = 1e-10 * max(np.abs(y).max(), 1e-300) if atol is None else atol
        worst = int(np.argmax(absr))
        if absr[worst] > tol:
            raise DecompositionError(
                f"residual {absr[worst]:.3g} at r={r[worst]:.4g} with an empty envelope",
                worst, float(r[worst]))
        return RateDecomposition(float(A1), float(A2), lams, (0.0,) * nterms, resid, envv, worst)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(absr > 0, absr / envv, 0.0)
    worst = int(np.argmax(ratio))
    c = float(ratio[worst])
    if not np.isfinite(c) or c > max_constant:
        raise DecompositionError(
            f"no certified constant: ratio {c:.3g} at r={r[worst]:.4g}", worst, float(r[worst]))
    if np.any(absr > c * envv * (1 + 1e-12) + 1e-300):
        raise DecompositionError("envelope assertion failed after certification", worst, float(r[worst]))
    return RateDecomposition(float(A1), float(A2), lams, (c,) * nterms, resid, envv, worst)


def decompose_growth_l1(y, ode, a, psi, dr, **kw):
    """Rate decomposition with remainder ``O(||psi||_L1 e^{a r})``.

    ``||psi||_L1`` uses the trapezoid rule on the grid.
    """
    _check_resonance(ode, a, "rate a")
    return decompose_growth(y, ode, GrowthEnvelope((), (a, psi)), dr, **kw)


def fit_tail_rate(r, y, window=None):
    """Slope of a least-squares line through ``log|y|`` on ``window``.

    ``window`` is ``(r_lo, r_hi)``; defaults to the whole range.
    """
    r = np.asarray(r, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    mask = np.ones_like(r, dtype=bool) if window is None else (r >= window[0]) & (r <= window[1])
    mask &= y > 0
    if mask.sum() < 2:
        return float("nan")
    slope, _ = np.polyfit(r[mask], np.log(y[mask]), 1)
    return float(slope)
