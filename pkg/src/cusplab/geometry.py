"""Flat fiber tori, the cusp metric on T^2 x [0, R] and synthetic perturbations.

Fiber coordinates are lattice coordinates ``u`` in ``[0, 1)^2``; the flat
metric in these coordinates is the constant Gram matrix. A Fourier mode
``exp(2 pi i k.u)`` has Euclidean wavevector ``2 pi B^{-T} k`` where
``B^T B = gram``.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, EnvelopeViolation, InvalidMetricError, ParameterError

# Lattice vectors with |k|_inf <= this bound enter the covering-radius search
# after basis reduction.
COVERING_SEARCH = 3


def _lagrange_gauss(b1, b2):
    """Reduce a 2D lattice basis so |b1| <= |b2| and |b1.b2| <= |b1|^2/2."""
    b1, b2 = np.array(b1, dtype=float), np.array(b2, dtype=float)
    if b1 @ b1 > b2 @ b2:
        b1, b2 = b2, b1
    for _ in range(200):
        m = np.round((b1 @ b2) / (b1 @ b1))
        b2 = b2 - m * b1
        if b2 @ b2 >= b1 @ b1:
            break
        b1, b2 = b2, b1
    return b1, b2


def _covering_radius(b1, b2):
    # Voronoi cell of the origin: vertices are intersections of bisector
    # pairs that satisfy every bisector inequality.
    b1, b2 = _lagrange_gauss(b1, b2)
    rng = range(-COVERING_SEARCH, COVERING_SEARCH + 1)
    vecs = np.array([i * b1 + j * b2 for i, j in itertools.product(rng, rng) if (i, j) != (0, 0)])
    half = 0.5 * np.einsum("ij,ij->i", vecs, vecs)
    best = 0.0
    tol = 1e-12 * half.max()
    for a, b in itertools.combinations(range(len(vecs)), 2):
        mat = vecs[[a, b]]
        det = np.linalg.det(mat)
        if abs(det) < 1e-14 * half[a] * half[b]:
            continue
        x = np.linalg.solve(mat, half[[a, b]])
        if np.all(vecs @ x <= half + tol):
            best = max(best, float(np.hypot(*x)))
    return best


@dataclass(frozen=True)
class FlatTorusMetric:
    """Flat metric on the fiber torus given by a 2x2 Gram matrix.

    Parameters
    ----------
    gram : array_like, shape (2, 2)
        Symmetric positive definite matrix of lattice inner products.
    """

    gram: np.ndarray
    basis: np.ndarray = field(init=False, repr=False, compare=False)
    gram_inv: np.ndarray = field(init=False, repr=False, compare=False)
    diameter: float = field(init=False, compare=False)
    area: float = field(init=False, compare=False)

    def __post_init__(self):
        g = np.array(self.gram, dtype=float)
        if g.shape != (2, 2) or not np.all(np.isfinite(g)):
            raise InvalidMetricError("gram must be a finite 2x2 matrix")
        if abs(g[0, 1] - g[1, 0]) > 1e-12 * np.abs(g).max():
            raise InvalidMetricError("gram must be symmetric")
        g[1, 0] = g[0, 1]
        eig = np.linalg.eigvalsh(g)
        if eig[0] <= 1e-12 * max(eig[1], 0.0) or eig[0] <= 0:
            raise InvalidMetricError(f"gram is not positive definite (eigenvalues {eig})")
        g.setflags(write=False)
        basis = np.linalg.cholesky(g).T  # columns b1, b2 with B^T B = gram
        basis.setflags(write=False)
        ginv = np.linalg.inv(g)
        ginv.setflags(write=False)
        object.__setattr__(self, "gram", g)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "gram_inv", ginv)
        object.__setattr__(self, "diameter", _covering_radius(basis[:, 0], basis[:, 1]))
        object.__setattr__(self, "area", float(np.sqrt(np.linalg.det(g))))

    @classmethod
    def square(cls, side=1.0):
        return cls(np.diag([side * side, side * side]))

    @classmethod
    def from_basis(cls, b1, b2):
        b = np.column_stack([b1, b2]).astype(float)
        return cls(b.T @ b)

    def dual_norm2(self, k):
        """Squared dual-lattice length ``k^T gram^{-1} k`` (k in Z^2, last axis)."""
        k = np.asarray(k, dtype=float)
        return np.einsum("...i,ij,...j->...", k, self.gram_inv, k)

    def wavevector(self, k):
        """Euclidean wavevector ``2 pi B^{-T} k`` of mode ``k`` (last axis)."""
        k = np.asarray(k, dtype=float)
        return 2 * np.pi * np.linalg.solve(self.basis.T, k.T).T

    def shortest_dual(self):
        """Shortest nonzero dual vector length squared and a minimizer."""
        best = min(self.gram_inv[0, 0], self.gram_inv[1, 1])
        # |k_i|^2 <= gram_ii * (k^T gram^-1 k) bounds the search box.
        m1 = int(np.floor(np.sqrt(best * self.gram[0, 0]))) + 1
        m2 = int(np.floor(np.sqrt(best * self.gram[1, 1]))) + 1
        k1, k2 = np.meshgrid(np.arange(-m1, m1 + 1), np.arange(-m2, m2 + 1), indexing="ij")
        ks = np.stack([k1.ravel(), k2.ravel()], axis=1)
        ks = ks[np.any(ks != 0, axis=1)]
        d = self.dual_norm2(ks)
        i = int(np.argmin(d))
        return float(d[i]), tuple(int(x) for x in ks[i])

    def to_dict(self):
        return {"gram": self.gram.tolist()}


def flat_torus_lambda1(flat):
    """First nonzero Laplace eigenvalue ``4 pi^2 min |k|^2_dual``.

    The scaled Poincare premise ``lambda1 * diam^2 >= e^-2`` is checked and
    a violation raises ``EnvelopeViolation``.
    """
    if not isinstance(flat, FlatTorusMetric):
        flat = FlatTorusMetric(flat)
    d2, _ = flat.shortest_dual()
    lam = 4 * np.pi ** 2 * d2
    if lam * flat.diameter ** 2 < np.exp(-2.0):
        raise EnvelopeViolation(
            f"lambda1*diam^2 = {lam * flat.diameter ** 2:.6g} below e^-2 for gram {flat.gram.tolist()}")
    return float(lam)


@dataclass(frozen=True)
class CuspMetric:
    """Warped product ``e^{-2r} g_flat + dr^2`` on ``T^2 x [0, R]``."""

    flat: FlatTorusMetric
    R: float

    def __post_init__(self):
        if not (self.R > 0 and np.isfinite(self.R)):
            raise DomainError(f"radial extent must be positive, got {self.R}")

    def _check(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(~np.isfinite(r)) or np.any(r < 0) or np.any(r > self.R * (1 + 1e-12)):
            raise DomainError(f"radius outside [0, {self.R}]")
        return r

    def fiber_metric(self, r):
        """Fiber Gram matrix ``e^{-2r} gram`` at radius ``r``."""
        return np.exp(-2 * float(self._check(r))) * self.flat.gram


def level_torus_diameter(cusp, r):
    """Diameter ``e^{-r} diam(flat)`` of the level torus at radius ``r``."""
    r = cusp._check(r)
    out = np.exp(-r) * cusp.flat.diameter
    return float(out) if out.ndim == 0 else out


def level_torus_area(cusp, r):
    """Area ``e^{-2r} area(flat)`` of the level torus at radius ``r``."""
    r = cusp._check(r)
    out = np.exp(-2 * r) * cusp.flat.area
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PerturbationEnvelope:
    """Envelope ``epsilon0 * e^{-eta r}`` for the metric perturbation."""

    epsilon0: float
    eta: float
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.eta) and self.eta > 1):
            raise ParameterError(f"eta must exceed 1, got {self.eta}")
        if not (np.isfinite(self.epsilon0) and self.epsilon0 >= 0):
            raise ParameterError(f"epsilon0 must be nonnegative, got {self.epsilon0}")

    def __call__(self, r):
        return self.epsilon0 * np.exp(-self.eta * np.asarray(r, dtype=float))


# Modes |k|_inf <= PERTURBATION_MODES carry the synthetic perturbation.
PERTURBATION_MODES = 2


def _mode_c2_bound(amp, kappa, xi2, r):
    """Upper bound for |p|_C2 of one real mode pair with weighted amplitude ``amp``.

    ``amp`` is the complex 6-vector of frame-weighted coefficients of the
    mode, the profile is ``e^{-kappa r}`` and ``xi2`` the squared wavevector.
    """
    from .tensor import WEIGHT_EXP

    s = kappa + WEIGHT_EXP
    a0 = np.linalg.norm(amp)
    a1 = np.linalg.norm(s * amp)
    a2 = np.linalg.norm(s * s * amp)
    e = np.exp(-kappa * r)
    e2r = np.exp(2 * r)
    c0 = a0
    c1 = np.sqrt(a1 ** 2 + e2r * xi2 * a0 ** 2)
    c2 = np.sqrt(a2 ** 2 + 2 * e2r * xi2 * a1 ** 2 + e2r ** 2 * xi2 ** 2 * a0 ** 2)
    return e * (c0 + c1 + c2)


def synthesize_perturbation(cusp, env, grid, K=PERTURBATION_MODES):
    """Seeded smooth tensor field ``p`` with ``|p|_C2 <= epsilon0 e^{-eta r}``.

    Uses modes ``|k|_inf <= 2``. Each mode has weighted profile
    ``e^{-(eta + 2[k != 0]) r}`` so the fiber-derivative weights are
    absorbed. Amplitudes are rescaled so the closed-form mode-sum bound on
    ``|p|_C2 e^{eta r}`` equals ``epsilon0`` at its worst node; the field
    itself is then at or below the envelope everywhere.

    Parameters
    ----------
    cusp : CuspMetric
    env : PerturbationEnvelope
    grid : RadialGrid
    K : int
        Fourier truncation of the returned field (at least 2).

    Returns
    -------
    TensorField
    """
    from .tensor import WEIGHT_COEF, WEIGHT_EXP, TensorField

    if not env.eta > 1:
        raise ParameterError(f"eta must exceed 1, got {env.eta}")
    if K < PERTURBATION_MODES:
        raise ParameterError(f"perturbation needs K >= {PERTURBATION_MODES}")
    rng = np.random.default_rng(env.seed)
    r = grid.r
    n = 2 * K + 1
    coeffs = np.zeros((6, n, n, grid.n), dtype=complex)
    d1 = np.zeros_like(coeffs)
    d2 = np.zeros_like(coeffs)
    bound = np.zeros(grid.n)
    m = PERTURBATION_MODES
    for k1 in range(0, m + 1):
        for k2 in range(-m, m + 1):
            if k1 == 0 and k2 < 0:
                continue
            zero = k1 == 0 and k2 == 0
            amp = rng.normal(size=6) if zero else rng.normal(size=6) + 1j * rng.normal(size=6)
            kappa = env.eta + (0.0 if zero else 2.0)
            xi2 = 4 * np.pi ** 2 * float(cusp.flat.dual_norm2((k1, k2)))
            bound += (1 if zero else 2) * _mode_c2_bound(amp, kappa, xi2, r)
            expo = kappa + WEIGHT_EXP  # raw component decays at this rate
            raw = (amp / WEIGHT_COEF)[:, None] * np.exp(-np.outer(expo, r))
            for sign in ((1,) if zero else (1, -1)):
                a, b = K + sign * k1, K + sign * k2
                val = raw if sign == 1 else np.conj(raw)
                coeffs[:, a, b] = val
                d1[:, a, b] = -expo[:, None] * val
                d2[:, a, b] = (expo ** 2)[:, None] * val
    ratio = bound * np.exp(env.eta * r)
    scale = env.epsilon0 / ratio.max() if env.epsilon0 > 0 else 0.0
    return TensorField(grid, cusp.flat, coeffs * scale, d1 * scale, d2 * scale)
