import math

import numpy as np
import pytest
import scipy.integrate
from hypothesis import assume, given
from hypothesis import strategies as st

from cusplab.cusp_operator import OperatorError, apply_L_perturbed
from cusplab.errors import ParameterError
from cusplab.geometry import FlatTorusMetric, PerturbationEnvelope, flat_torus_lambda1
from cusplab.grid import RadialGrid
from cusplab.norms import (COMPONENT_FACTOR, WeightParams, coarea_integrate, direct_weighted_l2,
                           mu_integrability, norm_0_lambda, poincare_check, sup_norm, weighted_h2,
                           weighted_l2)
from cusplab.samplers import random_full_field, random_radial_field, random_trivial_variation
from cusplab.tensor import RadialTensorField, TensorField, embed

from strategies import flat_tori, generator, seeds

G20 = RadialGrid(20.0, 0.01)
G3 = RadialGrid(3.0, 0.01)


def radial_h33(grid, values):
    return RadialTensorField.from_components(grid, h33=values)


class TestWeightParams:
    def test_derived_quantities(self):
        p = WeightParams(0.5, 1.5)
        assert (p.b, p.s0, p.sigma_star) == (1.0, 0.5, 0.5)
        assert p.mu(0.45) == pytest.approx(0.05)
        assert not p.degenerate
        assert WeightParams(0.3, 2.8).degenerate

    @pytest.mark.parametrize("lam,eta,sigma", [(0.0, 1.5, 0), (1.0, 1.5, 0), (0.5, 1.0, 0),
                                               (0.5, 1.5, -0.1), (math.nan, 1.5, 0)])
    def test_invalid(self, lam, eta, sigma):
        with pytest.raises(ParameterError):
            WeightParams(lam, eta, sigma)

    @given(st.floats(0.01, 0.99), st.floats(1.001, 10))
    def test_b_below_one_plus_lambda(self, lam, eta):
        assert WeightParams(lam, eta).b < 1 + lam


class TestWeightedL2:
    def test_zero(self):
        assert weighted_l2(RadialTensorField.zeros(G20), 0.3) == 0.0

    def test_closed_form_example(self):
        f = radial_h33(G20, np.exp(-0.5 * G20.r))
        assert weighted_l2(f, 0.0) == pytest.approx(math.sqrt(1 / 3), abs=1e-8)

    @given(st.floats(-1.0, 2.0), st.floats(0.0, 1.0), st.floats(-3, 3))
    def test_radial_matches_quad(self, mu, sigma, amp):
        assume(2 + 2 * mu - 2 * sigma > 0.1)
        f = radial_h33(G20, amp * np.exp(-mu * G20.r))
        ref, _ = scipy.integrate.quad(lambda r: np.exp((2 * sigma - 2 - 2 * mu) * r), 0, 20,
                                      epsabs=1e-14, epsrel=1e-13)
        assert weighted_l2(f, sigma) == pytest.approx(abs(amp) * math.sqrt(ref), rel=1e-9, abs=1e-14)

    def test_area_scaling(self):
        f = radial_h33(G3, np.exp(-G3.r))
        flat = FlatTorusMetric(np.diag([4.0, 1.0]))
        assert weighted_l2(f, 0.2, flat) == pytest.approx(math.sqrt(2) * weighted_l2(f, 0.2), rel=1e-14)

    @given(seeds, flat_tori(), st.floats(0, 1))
    def test_coarea_matches_direct_summation(self, seed, flat, sigma):
        h = random_full_field(G3, flat, generator(seed), K=2)
        a, b = weighted_l2(h, sigma), direct_weighted_l2(h, sigma, M=12)
        assert a == pytest.approx(b, rel=1e-6)

    @given(seeds, st.floats(-5, 5))
    def test_homogeneity(self, seed, c):
        h = random_full_field(G3, FlatTorusMetric.square(), generator(seed))
        assert weighted_l2(h.scaled(c), 0.4) == pytest.approx(abs(c) * weighted_l2(h, 0.4), rel=1e-12)

    def test_radial_embedding_consistent(self, square):
        h = random_radial_field(G3, np.random.default_rng(0))
        assert weighted_l2(embed(h, square, 2), 0.3) == pytest.approx(weighted_l2(h, 0.3), rel=1e-12)


class TestWeightedH2:
    def test_zero(self):
        assert weighted_h2(RadialTensorField.zeros(G20), 0.0) == 0.0

    def test_closed_form_example(self):
        r = G20.r
        vals, d1, d2 = (np.zeros((6, G20.n)) for _ in range(3))
        vals[5], d1[5], d2[5] = np.exp(-r), -np.exp(-r), np.exp(-r)
        h = RadialTensorField(G20, vals, d1, d2)
        assert weighted_h2(h, 0.0) == pytest.approx(1.5, abs=1e-8)

    @given(seeds, st.floats(0, 1))
    def test_dominates_l2(self, seed, sigma):
        rng = generator(seed)
        for h in (random_radial_field(G3, rng), random_full_field(G3, FlatTorusMetric.square(), rng)):
            assert weighted_h2(h, sigma) >= weighted_l2(h, sigma) * (1 - 1e-12)


class TestSupNorm:
    def test_zero(self):
        assert norm_0_lambda(RadialTensorField.zeros(G20), 0.5) == 0.0

    def test_exact_decay(self):
        assert norm_0_lambda(radial_h33(G20, np.exp(-0.5 * G20.r)), 0.5) == pytest.approx(1.0, rel=1e-12)

    @given(seeds, st.floats(0.05, 0.95))
    def test_property_i(self, seed, lam):
        rng = generator(seed)
        h = random_full_field(G3, FlatTorusMetric.square(), rng)
        n = norm_0_lambda(h, lam, M=16)
        bound = n * np.exp(-lam * G3.r)
        s = sup_norm(h, 16)
        assert np.all(s <= bound * (1 + 1e-12))
        assert np.max(s / bound) == pytest.approx(1.0, rel=1e-12)


class TestCoarea:
    def test_zero(self):
        assert coarea_integrate(np.zeros(G20.n), G20) == 0.0

    def test_exponential(self):
        assert coarea_integrate(lambda r: np.exp(-2 * r), G20) == pytest.approx((1 - math.exp(-40)) / 2,
                                                                                 abs=1e-10)


def single_mode_field(flat, k, amp, grid=G3, comp=5):
    K = max(abs(k[0]), abs(k[1]), 1)
    c = np.zeros((6, 2 * K + 1, 2 * K + 1, grid.n), dtype=complex)
    c[comp, K + k[0], K + k[1]] = amp
    c[comp, K - k[0], K - k[1]] = np.conj(amp)
    z = np.zeros_like(c)
    return TensorField(grid, flat, c, z, z)


class TestPoincare:
    def test_radial(self):
        res = poincare_check(random_radial_field(G3, np.random.default_rng(1)), 1.0)
        assert res.lhs == 0.0 and res.passed

    @given(flat_tori(), st.sampled_from([(1, 0), (0, 1), (1, 1), (1, -1), (2, 1)]),
           st.floats(0.0, 3.0))
    def test_single_mode_gradient_ratio(self, flat, k, r):
        r = round(r, 2)
        res = poincare_check(single_mode_field(flat, k, 0.7 + 0.2j), r, M=16)
        lam_k = 4 * math.pi ** 2 * float(flat.dual_norm2(k))
        expected = 1 / (math.e ** 2 * flat.diameter ** 2 * lam_k)
        assert res.gradient_ratio == pytest.approx(expected, rel=1e-10)
        assert res.gradient_ratio <= (1 + 1e-12) / (math.e ** 2 * flat.diameter ** 2 * flat_torus_lambda1(flat))
        assert res.passed

    def test_constant_reported(self, square):
        res = poincare_check(single_mode_field(square, (1, 0), 1.0), 0.5)
        assert res.factor == pytest.approx(math.e ** 2 * COMPONENT_FACTOR)

    @given(seeds, flat_tori())
    def test_random_fields_pass(self, seed, flat):
        rng = generator(seed)
        h = random_full_field(G3, flat, rng, K=2)
        for r in (0.0, 1.0, 2.5):
            res = poincare_check(h, r, M=12)
            assert res.passed and res.gradient_ratio <= 1 + 1e-12


class TestCompatibilityBounds:
    @given(seeds, st.floats(0, 1))
    def test_condition_iii(self, seed, frac):
        rng = generator(seed)
        p = WeightParams(0.5, 1.5)
        sigma = frac * p.b
        h = random_full_field(G3, FlatTorusMetric.square(), rng)
        f = h.scaled(1 / norm_0_lambda(h, p.lam, M=16))
        bound = math.sqrt(coarea_integrate(lambda r: np.exp((2 * sigma - 2 * p.lam - 2) * r), G3))
        assert weighted_l2(f, sigma) <= bound * math.sqrt(f.flat.area) * (1 + 1e-9)

    def test_condition_iv(self, square):
        rng = np.random.default_rng(3)
        env = PerturbationEnvelope(1e-3, 1.5, 0)
        err = OperatorError.seeded(env)
        for _ in range(5):
            v = random_trivial_variation(rng)
            h = embed(v.field(G20), square, 2)
            lv = apply_L_perturbed(h, err)
            c2 = v.field(G20).c2_norm().max()
            for sigma in (0.0, 0.45, 0.9, 1.0):
                bound = env.epsilon0 * c2 * math.sqrt(
                    coarea_integrate(lambda r: np.exp((2 * sigma - 2 * env.eta - 2) * r), G20))
                assert weighted_l2(lv, sigma) <= bound * (1 + 1e-9)


class TestMuIntegrability:
    @given(st.floats(0, 1), st.floats(-0.5, 1.5))
    def test_threshold_flagged(self, sigma, sigma_prime):
        p = WeightParams(0.5, 1.5)
        assume(abs(sigma_prime - (sigma + p.s0)) >= 0.01)
        res = mu_integrability(sigma, sigma_prime, p)
        assert res["bounded"] == res["expected"] == (sigma_prime < sigma + p.s0)

    def test_exponent(self):
        res = mu_integrability(0.0, 0.2, WeightParams(0.5, 1.5))
        assert res["exponent"] == pytest.approx(2 * (0.2 + 0.5) - 2)
