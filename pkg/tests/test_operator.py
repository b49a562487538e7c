import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given

from cusplab.cusp_operator import (OperatorError, apply_L_cusp, apply_L_full, apply_L_perturbed,
                                   check_error_envelope, solve_L_cusp, trace_ode_residual)
from cusplab.errors import BoundaryError, EnvelopeViolation, GridError, ResonanceError
from cusplab.geometry import FlatTorusMetric, PerturbationEnvelope
from cusplab.grid import RadialGrid
from cusplab.samplers import random_full_field, random_radial_field, random_trivial_variation
from cusplab.tensor import RadialTensorField, TensorField, TrivialEinsteinVariation, average, embed

from strategies import flat_tori, generator, seeds

GRID = RadialGrid(3.0, 0.01)
_r = sp.symbols("r", real=True)


def symbolic_operator(comps):
    """The defining ODE display applied symbolically; ``comps`` are sympy expressions."""
    h11, h12, h22, h13, h23, h33 = comps
    e = sp.exp
    d = lambda f, k=1: sp.diff(f, _r, k)  # noqa: E731
    tr_minus_33 = e(2 * _r) * (h11 + h22)
    out = [None] * 6
    out[5] = -sp.Rational(1, 2) * (d(h33, 2) - 2 * d(h33) - 4 * h33)
    for i, h in ((3, h13), (4, h23)):
        y = e(_r) * h
        out[i] = -sp.Rational(1, 2) * e(-_r) * (d(y, 2) - 2 * d(y) - 3 * y)
    for i, h, delta in ((0, h11, 1), (1, h12, 0), (2, h22, 1)):
        z = e(2 * _r) * h
        out[i] = -sp.Rational(1, 2) * e(-2 * _r) * (d(z, 2) - 2 * d(z) - 2 * delta * tr_minus_33)
    return out


def random_symbolic_field(rng):
    comps = []
    for _ in range(6):
        a, b, w, p = rng.uniform(-1, 1), rng.uniform(-2.5, 0.5), rng.uniform(0, 2), rng.uniform(0, 6)
        comps.append(a * sp.exp(b * _r) * sp.cos(w * _r + p))
    return comps


def sampled(grid, comps, order=0):
    f = sp.lambdify(_r, [sp.diff(c, _r, order) for c in comps], "numpy")
    return np.array([np.broadcast_to(v, grid.r.shape) for v in f(grid.r)], dtype=float)


class TestApplyLCusp:
    def test_kernel_with_finite_differences(self, grid20):
        rng = np.random.default_rng(0)
        for _ in range(10):
            v = random_trivial_variation(rng)
            h = RadialTensorField(grid20, v.field(grid20).values)  # derivatives by differences
            assert apply_L_cusp(h).norm().max() <= 1e-6

    def test_h33_exponential_example(self):
        h = RadialTensorField.from_components(GRID, h33=np.exp(-GRID.r))
        f = apply_L_cusp(h)
        assert f.component("h33")[0] == pytest.approx(0.5, abs=1e-8)
        np.testing.assert_allclose(f.component("h33")[5:-5], 0.5 * np.exp(-GRID.r[5:-5]), rtol=1e-8)

    def test_zero(self):
        assert not np.any(apply_L_cusp(RadialTensorField.zeros(GRID)).values)

    def test_too_few_nodes(self):
        g = RadialGrid(0.4, 0.1)
        h = RadialTensorField(g, np.zeros((6, 5)), np.zeros((6, 5)), np.zeros((6, 5)))
        apply_L_cusp(h)
        g4 = RadialGrid(0.3, 0.1)
        with pytest.raises(GridError):
            apply_L_cusp(RadialTensorField(g4, np.zeros((6, 4)), np.zeros((6, 4)), np.zeros((6, 4))))

    @given(seeds)
    def test_matches_symbolic_display(self, seed):
        comps = random_symbolic_field(generator(seed))
        h = RadialTensorField(GRID, sampled(GRID, comps), sampled(GRID, comps, 1), sampled(GRID, comps, 2))
        expected = sampled(GRID, symbolic_operator(comps))
        np.testing.assert_allclose(apply_L_cusp(h).values, expected, rtol=1e-11, atol=1e-11)

    @given(seeds)
    def test_linearity(self, seed):
        rng = generator(seed)
        h, g = random_radial_field(GRID, rng), random_radial_field(GRID, rng)
        a, b = rng.uniform(-2, 2, 2)
        lhs = apply_L_cusp(a * h + b * g).values
        rhs = a * apply_L_cusp(h).values + b * apply_L_cusp(g).values
        assert np.abs(lhs - rhs).max() <= 1e-12 * max(1.0, np.abs(lhs).max())


class TestTraceResidual:
    def test_random_fields(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            h = random_radial_field(GRID, rng)
            assert trace_ode_residual(h, apply_L_cusp(h)) <= 1e-5

    def test_trivial_variation(self):
        v = TrivialEinsteinVariation.traceless(0.4, 0.2).field(GRID)
        assert trace_ode_residual(v, RadialTensorField.zeros(GRID)) == 0.0

    def test_growing_h33(self):
        h = RadialTensorField.from_components(GRID, h33=np.exp(2 * GRID.r))
        assert trace_ode_residual(h, apply_L_cusp(h)) <= 1e-5


class TestApplyLFull:
    def test_radial_reduces_to_cusp(self, square):
        h = random_radial_field(GRID, np.random.default_rng(2))
        out = apply_L_full(embed(h, square, 2))
        K = 2
        np.testing.assert_array_equal(out.coeffs[:, K, K].real, apply_L_cusp(h).values)
        rest = out.coeffs.copy()
        rest[:, K, K] = 0
        assert not np.any(rest)

    @given(seeds, flat_tori())
    def test_commutes_with_average(self, seed, flat):
        h = random_full_field(GRID, flat, generator(seed), K=2)
        diff = average(apply_L_full(h)).values - apply_L_cusp(average(h)).values
        assert np.abs(diff).max() <= 1e-12

    def test_single_mode_fiber_term(self):
        flat = FlatTorusMetric(np.array([[1.5, 0.3], [0.3, 0.8]]))
        K = 1
        c = np.zeros((6, 3, 3, GRID.n), dtype=complex)
        c[5, 2, 1] = c[5, 0, 1] = 0.25
        h = TensorField(GRID, flat, c, np.zeros_like(c), np.zeros_like(c))
        out = apply_L_full(h)
        kstar2 = float(flat.dual_norm2((1, 0)))
        expected = 0.25 * (2.0 + 0.5 * np.exp(2 * GRID.r) * 4 * math.pi ** 2 * kstar2)
        np.testing.assert_allclose(out.coeffs[5, K + 1, K].real, expected, rtol=1e-14)


class TestPerturbed:
    def test_zero_epsilon_is_full(self, square):
        h = random_full_field(GRID, square, np.random.default_rng(3))
        err = OperatorError.seeded(PerturbationEnvelope(0.0, 1.5, 4))
        np.testing.assert_array_equal(apply_L_perturbed(h, err).coeffs, apply_L_full(h).coeffs)

    @given(seeds, flat_tori())
    def test_envelope_bound(self, seed, flat):
        h = random_full_field(GRID, flat, generator(seed), K=2)
        err = OperatorError.seeded(PerturbationEnvelope(1e-3, 1.5, seed % 1000))
        eh = (apply_L_perturbed(h, err) - apply_L_full(h))
        assert check_error_envelope(err, h, eh, M=8) <= 1 + 1e-9

    def test_radial_envelope(self):
        h = random_radial_field(GRID, np.random.default_rng(5))
        err = OperatorError.seeded(PerturbationEnvelope(1e-2, 2.0, 1))
        eh = err.apply(h)
        assert np.all(eh.norm() <= 1e-2 * np.exp(-2.0 * GRID.r) * h.c2_norm() * (1 + 1e-12))

    def test_violation_detected(self, square):
        h = random_full_field(GRID, square, np.random.default_rng(6))
        err = OperatorError.seeded(PerturbationEnvelope(1e-3, 1.5, 0))
        eh = err.apply(h)
        worst = check_error_envelope(err, h, eh, M=8)
        with pytest.raises(EnvelopeViolation):
            check_error_envelope(err, h, eh.scaled(2.0 / worst), M=8)

    def test_deterministic(self, square):
        h = random_full_field(GRID, square, np.random.default_rng(7))
        a = apply_L_perturbed(h, OperatorError.seeded(PerturbationEnvelope(1e-3, 1.5, 9)))
        b = apply_L_perturbed(h, OperatorError.seeded(PerturbationEnvelope(1e-3, 1.5, 9)))
        assert a.coeffs.tobytes() == b.coeffs.tobytes()

    def test_couplings_bounded(self):
        with pytest.raises(ValueError):
            OperatorError(PerturbationEnvelope(1e-3, 1.5), 2 * np.eye(6)[None].repeat(3, axis=0))


class TestSolve:
    def test_zero(self):
        h = solve_L_cusp(RadialTensorField.zeros(GRID), np.zeros(6))
        assert not np.any(h.values)

    def test_h33_ansatz(self):
        # (mu^2 - 2 mu - 4) C = -2 c with mu = -1: f33 = -0.5 e^{-r} gives particular -e^{-r}.
        f = RadialTensorField.from_components(GRID, h33=-0.5 * np.exp(-GRID.r))
        h0 = np.zeros(6)
        h0[5] = 0.7
        h = solve_L_cusp(f, h0)
        l1, l2 = 1 - math.sqrt(5), 1 + math.sqrt(5)
        r = GRID.r
        # The growing-mode integral is cut at R; the missing tail is m (e^{l2 r} - e^{l1 r}).
        m = math.exp(-(l2 + 1) * GRID.R) / ((l2 + 1) * (l2 - l1))
        exact = -np.exp(-r) + 1.7 * np.exp(l1 * r) + m * (np.exp(l2 * r) - np.exp(l1 * r))
        np.testing.assert_allclose(h.component("h33"), exact, atol=1e-9)

    @given(seeds)
    def test_roundtrip(self, seed):
        rng = generator(seed)
        f = random_radial_field(GRID, rng, min_rate=0.3, max_rate=2.0)
        h = solve_L_cusp(f, rng.uniform(-1, 1, 6))
        assert np.abs(apply_L_cusp(h).values - f.values).max() <= 1e-5

    def test_roundtrip_with_growing_modes(self):
        rng = np.random.default_rng(8)
        f = random_radial_field(GRID, rng)
        h = solve_L_cusp(f, rng.uniform(-1, 1, 6), rng.uniform(-1, 1, 6), select_decaying=False)
        res = np.abs(apply_L_cusp(h).values - f.values).max()
        assert res <= 1e-5 * max(1.0, np.abs(h.d2).max())

    def test_inconsistent_derivative(self):
        f = random_radial_field(GRID, np.random.default_rng(9))
        with pytest.raises(BoundaryError):
            solve_L_cusp(f, np.zeros(6), np.ones(6), select_decaying=True)

    def test_consistent_derivative_accepted(self):
        f = random_radial_field(GRID, np.random.default_rng(10))
        h = solve_L_cusp(f, np.zeros(6))
        same = solve_L_cusp(f, np.zeros(6), h.d1[:, 0], select_decaying=True)
        np.testing.assert_allclose(same.values, h.values)

    def test_growing_modes_need_derivatives(self):
        with pytest.raises(BoundaryError):
            solve_L_cusp(RadialTensorField.zeros(GRID), np.zeros(6), select_decaying=False)

    def test_resonant_forcing_rejected(self):
        g = RadialGrid(10.0, 0.01)
        f = RadialTensorField.from_components(g, h33=np.exp((1 - math.sqrt(5)) * g.r))
        with pytest.raises(ResonanceError):
            solve_L_cusp(f, np.zeros(6))
