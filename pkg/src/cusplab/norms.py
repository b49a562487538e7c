"""Weighted L2/H2 norms, the weighted sup-norm and the level-wise Poincare check.

Volume integrals over ``T^2 x [0, R]`` are done by co-area: a fiber
integral at each radial node (exact by Parseval, or by sampling for
nonlinear integrands) followed by radial quadrature.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .geometry import FlatTorusMetric
from .grid import RadialGrid, integrate
from .tensor import RadialTensorField, TensorField, as_tensor_field, frame_weights


@dataclass(frozen=True)
class WeightParams:
    """Rate parameters of the bootstrap.

    Parameters
    ----------
    lam : float
        Decay rate of the forcing, in (0, 1).
    eta : float
        Decay rate of the metric perturbation, > 1.
    sigma : float
        Current weight exponent, >= 0.
    """

    lam: float
    eta: float
    sigma: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.lam) and 0 < self.lam < 1):
            raise ParameterError(f"lambda must lie in (0, 1), got {self.lam}")
        if not (np.isfinite(self.eta) and self.eta > 1):
            raise ParameterError(f"eta must exceed 1, got {self.eta}")
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise ParameterError(f"sigma must be nonnegative, got {self.sigma}")

    @property
    def b(self):
        """Terminal weight ``2 + lambda - eta``."""
        return 2 + self.lam - self.eta

    @property
    def s0(self):
        """Admissible step ``eta - 1``."""
        return self.eta - 1

    @property
    def sigma_star(self):
        """Excluded weight ``2 - eta``."""
        return 2 - self.eta

    @property
    def degenerate(self):
        """True when ``b < 0`` and the bootstrap range collapses to sigma = 0."""
        return self.b < 0

    def mu(self, sigma=None):
        """Output rate ``2 - eta - sigma``."""
        return 2 - self.eta - (self.sigma if sigma is None else sigma)

    def with_sigma(self, sigma):
        return WeightParams(self.lam, self.eta, sigma)

    def to_dict(self):
        return {"lambda": self.lam, "eta": self.eta, "b": self.b, "s0": self.s0,
                "sigma_star": self.sigma_star, "degenerate": self.degenerate}


def coarea_integrate(levelwise, grid):
    """``int_0^R levelwise(r) dr`` by end-corrected trapezoid quadrature.

    ``levelwise`` is either samples on ``grid`` or a callable of ``r``.
    """
    vals = levelwise(grid.r) if callable(levelwise) else np.asarray(levelwise, dtype=float)
    return float(integrate(vals, grid.dr))


def _flat_of(f, flat):
    if isinstance(f, TensorField):
        return f.flat
    return FlatTorusMetric.square() if flat is None else flat


def level_mean_square(f, flat=None):
    """Fiber mean of ``|f|^2`` per node (exact)."""
    if isinstance(f, RadialTensorField):
        return f.norm() ** 2
    return f.fiber_mean_square()


def weighted_l2(f, sigma, flat=None):
    """``(int e^{2 sigma r} |f|^2 dvol)^{1/2}`` with Parseval fiber integrals.

    Radial inputs use ``flat`` (unit square torus by default) for the
    fiber area.
    """
    fl = _flat_of(f, flat)
    r = f.grid.r
    level = np.exp((2 * sigma - 2) * r) * fl.area * level_mean_square(f)
    return float(np.sqrt(coarea_integrate(level, f.grid)))


def direct_weighted_l2(f, sigma, M=None, flat=None):
    """Same integral by summing pointwise samples on an MxM fiber grid."""
    fl = _flat_of(f, flat)
    tf = as_tensor_field(f, fl)
    vals = tf.sample_values(M)  # (6, M, M, N)
    w = frame_weights(tf.r)[:, None, None, :]
    sq = np.sum((w * vals) ** 2, axis=0)  # (M, M, N)
    cell = fl.area * np.exp(-2 * tf.r) / (sq.shape[0] * sq.shape[1])
    level = np.exp(2 * sigma * tf.r) * cell * sq.sum(axis=(0, 1))
    return float(np.sqrt(coarea_integrate(level, tf.grid)))


def weighted_h2(h, sigma, M=None, flat=None):
    """``(int e^{2 sigma r} |h|_C2^2 dvol)^{1/2}`` with sampled fiber means."""
    fl = _flat_of(h, flat)
    r = h.grid.r
    if isinstance(h, RadialTensorField):
        mean = h.c2_norm() ** 2
    else:
        mean = h.fiber_reduce(lambda n, sl: ((n[0] + n[1] + n[2]) ** 2).mean(axis=(0, 1)), M)
    level = np.exp((2 * sigma - 2) * r) * fl.area * mean
    return float(np.sqrt(coarea_integrate(level, h.grid)))


def sup_norm(f, M=None):
    """``max_{T(r)} |f|`` per node (sampled for full fields)."""
    if isinstance(f, RadialTensorField):
        return f.norm()
    return f.max_norm(M)


def norm_0_lambda(f, lam, M=None):
    """Weighted sup-norm ``sup e^{lambda r} |f|`` over grid nodes and fiber samples."""
    return float(np.max(np.exp(lam * f.grid.r) * sup_norm(f, M)))


@dataclass(frozen=True)
class PoincareResult:
    """Both sides of the level-wise Poincare inequality at one level."""

    lhs: float
    rhs: float
    passed: bool
    factor: float
    gradient_ratio: float


# Sum over frame components of the scalar inequality: the weights are
# constant on each level torus, so the component factor is 1.
COMPONENT_FACTOR = 1.0


def poincare_check(h, r, M=None):
    """Check ``int_T(r) |h - h_hat|^2 <= C diam(T(r))^2 int_T(r) |h|_C1^2``.

    ``C = e^2 * COMPONENT_FACTOR``. ``lhs`` is exact by Parseval; the
    ``|h|_C1`` integral uses fiber samples. ``gradient_ratio`` is the
    sharper ratio of ``lhs`` to ``C diam^2`` times the exact fiber gradient
    integral (at most 1 when the lambda1 premise holds).
    """
    if isinstance(h, RadialTensorField):
        return PoincareResult(0.0, 0.0, True, np.e ** 2 * COMPONENT_FACTOR, 0.0)
    i = h.grid.index(r)
    rr = h.grid.r[i]
    K = h.K
    w2 = frame_weights(np.array([rr]))[:, 0] ** 2
    c = h.coeffs[..., i]
    power = np.einsum("cab,c->ab", np.abs(c) ** 2, w2)
    power[K, K] = 0.0
    area = h.flat.area * np.exp(-2 * rr)
    lhs = area * float(power.sum())
    diam = h.flat.diameter * np.exp(-rr)
    C = np.e ** 2 * COMPONENT_FACTOR
    grad = area * float(np.sum(np.exp(2 * rr) * np.sum(h.wavevectors ** 2, axis=-1) * power))
    n0, n1 = h.sample_block(slice(i, i + 1), M, orders=1)
    c1_int = area * float(np.mean((n0[..., 0] + n1[..., 0]) ** 2))
    rhs = C * diam ** 2 * c1_int
    gratio = lhs / (C * diam ** 2 * grad) if grad > 0 else 0.0
    return PoincareResult(float(lhs), float(rhs), bool(lhs <= rhs * (1 + 1e-12)), C, float(gratio))


def mu_integrability(sigma, sigma_prime, params, R_values=(50.0, 100.0, 200.0, 400.0),
                     dr=0.05, tol=0.05):
    """Numerically decide whether ``int_0^R e^{-2r} e^{2(sigma' + mu(sigma)) r} dr`` stays bounded.

    The integral is evaluated for each ``R`` in ``R_values``; it is declared
    bounded when the last doubling changes it by less than ``tol``
    (relative). The analytic criterion is ``sigma' < sigma + eta - 1``.

    Returns
    -------
    dict
        ``bounded`` (numerical verdict), ``expected`` (analytic verdict) and
        the integral values.
    """
    kappa = 2 * (sigma_prime + params.mu(sigma)) - 2
    vals = []
    with np.errstate(over="ignore", invalid="ignore"):
        for R in R_values:
            g = RadialGrid(float(R), dr)
            lev = np.exp(kappa * g.r)
            vals.append(float(np.dot(lev, np.full(g.n, dr))) if not np.all(np.isfinite(lev))
                        else coarea_integrate(lev, g))
    a, b = vals[-2], vals[-1]
    bounded = bool(np.isfinite(b) and b > 0 and (b - a) <= tol * b)
    return {"bounded": bounded, "expected": bool(sigma_prime < sigma + params.s0),
            "exponent": kappa, "integrals": vals}
