"""Seeded random inputs with analytic radial derivatives.

Profiles are sums ``A e^{beta r} cos(omega r + phi)`` specified for the
frame-weighted components; raw components are the weighted profile divided
by the frame weight, with derivatives by the product rule.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import FlatTorusMetric
from .tensor import WEIGHT_COEF, WEIGHT_EXP, RadialTensorField, TensorField, TrivialEinsteinVariation


@dataclass(frozen=True)
class Profile:
    """``sum_j A_j e^{beta_j r} cos(omega_j r + phi_j)`` with exact derivatives."""

    amp: np.ndarray
    beta: np.ndarray
    omega: np.ndarray
    phase: np.ndarray

    def evaluate(self, r):
        """Values and first two derivatives at ``r``."""
        r = np.asarray(r, dtype=float)[None, :]
        a, b, w, p = (x[:, None] for x in (self.amp, self.beta, self.omega, self.phase))
        e = a * np.exp(b * r)
        c, s = np.cos(w * r + p), np.sin(w * r + p)
        y = e * c
        y1 = e * (b * c - w * s)
        y2 = e * ((b * b - w * w) * c - 2 * b * w * s)
        return y.sum(axis=0), y1.sum(axis=0), y2.sum(axis=0)


def random_profile(rng, rates, scale=1.0, max_omega=1.0):
    """Profile with one oscillating term per decay rate (``beta = -rate``)."""
    rates = np.asarray(rates, dtype=float)
    n = rates.size
    return Profile(scale * rng.uniform(-1, 1, n), -rates,
                   rng.uniform(0, max_omega, n), rng.uniform(0, 2 * np.pi, n))


def _unweight(r, p, p1, p2, comp, extra=0.0):
    """Raw component and derivatives from a weighted profile.

    The raw value is ``p e^{-(s + extra) r} / coef`` with ``s`` the frame
    weight exponent of component ``comp``.
    """
    s = WEIGHT_EXP[comp] + extra
    e = np.exp(-s * r) / WEIGHT_COEF[comp]
    return e * p, e * (p1 - s * p), e * (p2 - 2 * s * p1 + s * s * p)


def radial_from_profiles(grid, profiles):
    """Radial field whose weighted components follow ``profiles`` (6 entries, None = 0)."""
    vals = np.zeros((3, 6, grid.n))
    for c, prof in enumerate(profiles):
        if prof is None:
            continue
        y = prof.evaluate(grid.r)
        vals[:, c] = _unweight(grid.r, *y, c)
    return RadialTensorField(grid, vals[0], vals[1], vals[2])


def random_radial_field(grid, rng, min_rate=0.3, max_rate=2.0, terms=2, scale=1.0):
    """Radial field with weighted components decaying at rates in ``[min_rate, max_rate]``."""
    profs = [random_profile(rng, rng.uniform(min_rate, max_rate, terms), scale) for _ in range(6)]
    return radial_from_profiles(grid, profs)


def random_trivial_variation(rng, scale=1.0):
    v11, v12 = rng.uniform(-scale, scale, 2)
    return TrivialEinsteinVariation.traceless(v11, v12)


def random_gram(rng, max_condition=25.0):
    """Random SPD Gram matrix with condition number at most ``max_condition``."""
    cond = rng.uniform(1.0, max_condition)
    scale = rng.uniform(0.5, 2.0)
    theta = rng.uniform(0, np.pi)
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    g = rot @ np.diag([scale, scale * cond]) @ rot.T
    return 0.5 * (g + g.T)


def random_flat_torus(rng, max_condition=25.0):
    return FlatTorusMetric(random_gram(rng, max_condition))


def random_full_field(grid, flat, rng, K=2, radial_rates=(0.3, 2.0), mode_extra=0.0,
                      mode_rates=(0.3, 2.0), scale=1.0, terms=1):
    """Full field with analytic derivatives.

    The k=0 slice has weighted profiles decaying at rates in
    ``radial_rates``. Every mode ``k != 0`` with ``|k|_inf <= K`` has
    weighted profile ``e^{-mode_extra r}`` times a random profile with
    rates in ``mode_rates``; the reality constraint is built in.
    """
    n = 2 * K + 1
    half = [(k1, k2) for k1 in range(K + 1) for k2 in range(-K, K + 1) if k1 > 0 or k2 >= 0]
    m = len(half)
    # Draws per (mode, component, real/imaginary part, term).
    shape = (m, 6, 2, terms)
    lo = np.full(m, mode_rates[0], dtype=float)
    hi = np.full(m, mode_rates[1], dtype=float)
    lo[0], hi[0] = radial_rates
    rates = rng.uniform(lo[:, None, None, None], hi[:, None, None, None], shape)
    amp = scale * rng.uniform(-1, 1, shape)
    omega = rng.uniform(0, 1, shape)
    phase = rng.uniform(0, 2 * np.pi, shape)
    amp[0, :, 1] = 0.0
    r = grid.r
    e = amp[..., None] * np.exp(-rates[..., None] * r)
    arg = omega[..., None] * r + phase[..., None]
    c, sn = np.cos(arg), np.sin(arg)
    b, w = -rates[..., None], omega[..., None]
    y = (e * c).sum(axis=3)
    y1 = (e * (b * c - w * sn)).sum(axis=3)
    y2 = (e * ((b * b - w * w) * c - 2 * b * w * sn)).sum(axis=3)
    extra = np.full(m, mode_extra, dtype=float)
    extra[0] = 0.0
    sw = np.asarray(WEIGHT_EXP, dtype=float)[None, :] + extra[:, None]  # (m, 6)
    ew = np.exp(-sw[..., None] * r) / np.asarray(WEIGHT_COEF, dtype=float)[None, :, None]
    sw = sw[:, :, None, None]
    ew = ew[:, :, None, :]
    raw = np.stack([ew * y, ew * (y1 - sw * y), ew * (y2 - 2 * sw * y1 + sw * sw * y)])
    vals = raw[:, :, :, 0] + 1j * raw[:, :, :, 1]  # (3, m, 6, N)
    arrs = np.zeros((3, 6, n, n, grid.n), dtype=complex)
    for j, (k1, k2) in enumerate(half):
        arrs[:, :, K + k1, K + k2] = vals[:, j]
        if j:
            arrs[:, :, K - k1, K - k2] = np.conj(vals[:, j])
    return TensorField(grid, flat, arrs[0], arrs[1], arrs[2])


@dataclass(frozen=True)
class PlantedInstance:
    """``h = v + w`` with known ``v``, and ``f`` the perturbed operator image of ``h``."""

    h: TensorField
    f: TensorField
    v: TrivialEinsteinVariation
    w: TensorField


def planted_instance(grid, flat, v, err, lam, rng, K=2, amplitude=0.2):
    """Plant a trivial Einstein variation under a decaying contamination.

    The k=0 contamination has weighted profiles ``e^{-lam r}`` plus faster
    terms; modes ``k != 0`` decay with weighted rate above ``2 + lam`` so
    that ``L_full`` of them stays in the ``e^{-lam r}`` class.

    Parameters
    ----------
    grid : RadialGrid
    flat : FlatTorusMetric
    v : TrivialEinsteinVariation
    err : OperatorError
        Lower-order perturbation; ``f = L_full h + E h``.
    lam : float
    rng : numpy.random.Generator
    K : int
    amplitude : float
    """
    from .cusp_operator import apply_L_perturbed

    radial = (lam, lam + 0.8)
    w = random_full_field(grid, flat, rng, K=K, radial_rates=radial, mode_extra=2 + lam,
                          mode_rates=(0.3, 1.0), scale=amplitude, terms=2)
    vf = TensorField.from_radial(v.field(grid), flat, K)
    h = vf + w
    f = apply_L_perturbed(h, err)
    return PlantedInstance(h, f, v, w)
