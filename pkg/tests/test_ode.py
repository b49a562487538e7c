import math

import mpmath
import numpy as np
import pytest
import scipy.integrate
from hypothesis import assume, given
from hypothesis import strategies as st

from cusplab.errors import DecompositionError, GridError, HypothesisViolation, ODEOverflowError, ResonanceError
from cusplab.grid import RadialGrid
from cusplab.ode import (Q1, Q2, Q3, GrowthEnvelope, QuadraticODE, decompose_growth, decompose_growth_l1,
                         exponential_convolution, fit_tail_rate, particular_solution, roots, solve_ivp)
from cusplab.suites import fundamental_rates

from strategies import generator, seeds

SQ5 = math.sqrt(5)
FAMILY_ROOTS = [(Q1, (1 - SQ5, 1 + SQ5)), (Q2, (-1.0, 3.0)), (Q3, (0.0, 2.0))]
coeffs = st.tuples(st.floats(-6, 6), st.floats(-10, 10)).filter(lambda pq: pq[0] ** 2 - 4 * pq[1] > 1e-3)


def mp_roots(p, q):
    mpmath.mp.dps = 40
    d = mpmath.sqrt(mpmath.mpf(p) ** 2 - 4 * mpmath.mpf(q))
    return sorted([(-mpmath.mpf(p) - d) / 2, (-mpmath.mpf(p) + d) / 2])


def reference_ivp(ode, u_fn, y0, y0p, r):
    sol = scipy.integrate.solve_ivp(lambda t, s: [s[1], u_fn(t) - ode.p * s[1] - ode.q * s[0]],
                                    (r[0], r[-1]), [y0, y0p], t_eval=r, method="DOP853",
                                    rtol=1e-13, atol=1e-14)
    return sol.y[0]


class TestQuadraticODE:
    @pytest.mark.parametrize("ode,expected", FAMILY_ROOTS)
    def test_family_roots(self, ode, expected):
        l1, l2 = roots(ode)
        assert float(l1) == pytest.approx(expected[0], abs=1e-15)
        assert float(l2) == pytest.approx(expected[1], abs=1e-15)

    @given(coeffs)
    def test_roots_match_mpmath(self, pq):
        p, q = pq
        got = roots(QuadraticODE(p, q))
        for a, b in zip(got, mp_roots(p, q)):
            assert abs(float(a) - float(b)) <= 1e-14 * max(1.0, abs(float(b)))

    @pytest.mark.parametrize("p,q", [(0.0, 1.0), (2.0, 1.0), (math.nan, 0.0)])
    def test_needs_distinct_real_roots(self, p, q):
        with pytest.raises(HypothesisViolation):
            QuadraticODE(p, q)

    def test_from_roots_and_extent(self):
        ode = QuadraticODE.from_roots(-1.0, 3.0, kind="interval", R=10.0)
        assert (ode.p, ode.q) == (-2.0, -3.0)
        assert ode.extent() == 9.0
        assert QuadraticODE(-2.0, -3.0, R=10.0).extent() == 10.0
        with pytest.raises(ValueError):
            QuadraticODE(-2.0, -3.0, kind="ray")

    def test_characteristic_polynomial(self):
        assert Q2(3.0) == 0.0 and Q2(-1.0) == 0.0


class TestSolveIVP:
    def test_homogeneous_decaying_mode(self):
        g = RadialGrid(5.0, 0.01)
        l1 = roots(Q1)[0]
        sol = solve_ivp(Q1, np.zeros(g.n), 1.0, l1, g.dr)
        assert sol.y[-1] == pytest.approx(math.exp(float(l1) * 5.0), rel=1e-8)

    def test_tail_rates_in_stable_direction(self):
        rows = fundamental_rates(20.0, 0.01)
        expected = sorted(x for _, pair in FAMILY_ROOTS for x in pair)
        assert sorted(r["root"] for r in rows) == pytest.approx(expected, abs=1e-15)
        for row in rows:
            assert row["error"] <= 1e-4, row

    def test_forward_decaying_mode_is_swamped(self):
        # Forward integration excites the growing mode at rounding level; hence the splitting.
        g = RadialGrid(20.0, 0.01)
        l1 = roots(Q1)[0]
        sol = solve_ivp(Q1, np.zeros(g.n), 1.0, l1, g.dr)
        assert fit_tail_rate(g.r, sol.y, (15.0, 20.0)) > 0

    def test_zero_data(self):
        sol = solve_ivp(Q2, np.zeros(101), 0.0, 0.0, 0.01)
        assert not np.any(sol.y) and not np.any(sol.yp)

    def test_exponential_forcing_example(self):
        # (mu^2 - 2 mu - 4) C = -2 at mu = -0.5 gives C = 0.72727...
        g = RadialGrid(2.0, 0.01)
        C = -2 / (0.25 + 1 - 4)
        assert C == pytest.approx(0.72727, abs=1e-5)
        sol = solve_ivp(Q1, -2 * np.exp(-0.5 * g.r), 0.0, 0.0, g.dr)
        d = decompose_growth(sol.y, Q1, GrowthEnvelope(((2.0, -0.5),)), g.dr)
        assert np.abs(d.residual - C * np.exp(-0.5 * g.r)).max() <= 1e-6
        assert d.A1 + d.A2 == pytest.approx(-C, abs=1e-6)

    @given(seeds)
    def test_matches_reference_integrator(self, seed):
        rng = generator(seed)
        ode = QuadraticODE.from_roots(*sorted(rng.uniform(-2, 2, 2) + [0, 0.5]))
        a, w = rng.uniform(-1, 1), rng.uniform(0, 3)
        y0, y0p = rng.uniform(-1, 1, 2)
        g = RadialGrid(2.0, 0.01)
        u_fn = lambda t: np.exp(a * t) * np.sin(w * t)  # noqa: E731
        ref = reference_ivp(ode, u_fn, y0, y0p, g.r)
        got = solve_ivp(ode, u_fn(g.r), y0, y0p, g.dr).y
        assert np.abs(got - ref).max() <= 1e-6 * max(1.0, np.abs(ref).max())

    def test_fourth_order_convergence(self):
        errs = []
        for dr in (0.02, 0.01):
            g = RadialGrid(2.0, dr)
            u_fn = lambda t: np.exp(-t) * np.sin(3 * t)  # noqa: E731
            ref = reference_ivp(Q2, u_fn, 0.3, -0.2, g.r)
            errs.append(np.abs(solve_ivp(Q2, u_fn(g.r), 0.3, -0.2, dr).y - ref).max())
        assert 12 < errs[0] / errs[1] < 20

    def test_backward(self):
        g = RadialGrid(3.0, 0.01)
        l2 = roots(Q2)[1]
        y_end = math.exp(3 * 3.0)
        sol = solve_ivp(Q2, np.zeros(g.n), y_end, l2 * np.longdouble(y_end), g.dr, direction="backward")
        np.testing.assert_allclose(sol.y, np.exp(3 * g.r), rtol=1e-6)

    def test_overflow_reported(self):
        g = RadialGrid(300.0, 0.1)
        with pytest.raises(ODEOverflowError) as exc:
            solve_ivp(Q2, np.zeros(g.n), 1.0, 0.0, g.dr)
        assert 0 < exc.value.index < g.n

    def test_invalid_input(self):
        with pytest.raises(GridError):
            solve_ivp(Q2, np.zeros(1), 0.0, 0.0, 0.1)
        with pytest.raises(ValueError):
            solve_ivp(Q2, np.zeros(5), 0.0, 0.0, 0.1, direction="up")


class TestVariationOfParameters:
    @given(st.floats(-3, 3), st.floats(-2, 2))
    def test_convolution_of_exponential(self, lam, m):
        assume(abs(lam - m) > 1e-3)
        g = RadialGrid(3.0, 0.01)
        u = np.exp(m * g.r)
        got = exponential_convolution(u, lam, g.dr)
        if lam <= 0:
            exact = (np.exp(m * g.r) - np.exp(lam * g.r)) / (m - lam)
        else:
            exact = (np.exp(m * g.r) - np.exp(lam * g.r + (m - lam) * g.R)) / (m - lam)
        assert np.abs(got - exact).max() <= 1e-8 * max(1.0, np.abs(exact).max())

    def test_needs_four_nodes(self):
        with pytest.raises(GridError):
            exponential_convolution(np.ones(3), 1.0, 0.1)

    @given(seeds)
    def test_particular_solves_ode(self, seed):
        rng = generator(seed)
        ode = QuadraticODE.from_roots(*sorted(rng.uniform(-3, 3, 2) + [0, 0.3]))
        g = RadialGrid(4.0, 0.01)
        u = rng.uniform(-1, 1) * np.exp(rng.uniform(-2, 1) * g.r) * np.cos(rng.uniform(0, 3) * g.r)
        y, yp, ypp = particular_solution(ode, u, g.dr)
        from cusplab.grid import radial_derivatives

        d1, d2 = radial_derivatives(y, g.dr)
        scale = max(1.0, np.abs(u).max(), np.abs(ypp).max())
        assert np.abs(d1 - yp).max() <= 1e-6 * scale
        assert np.abs(d2 - ypp).max() <= 1e-5 * scale

    def test_particular_has_no_growing_mode(self):
        g = RadialGrid(10.0, 0.01)
        r, R = g.r, g.R
        y, _, _ = particular_solution(Q2, np.exp(-2 * r), g.dr)
        # Closed forms of the two convolutions; the growing one is cut at R.
        g1 = np.exp(-r) - np.exp(-2 * r)
        g2 = -(np.exp(-2 * r) - np.exp(3 * r - 5 * R)) / 5
        np.testing.assert_allclose(y, (g2 - g1) / 4, atol=1e-11)


def plant(ode, r, A1, A2, terms, rng):
    """Exact-root homogeneous part plus a bounded multiple of each envelope term."""
    l1, l2 = (float(x) for x in roots(ode))
    rem = sum(b * rng.uniform(-1, 1) * np.exp(m * r) * np.cos(rng.uniform(0, 3) * r) for b, m in terms)
    return A1 * np.exp(l1 * r) + A2 * np.exp(l2 * r) + rem


class TestDecomposeGrowth:
    def test_pure_homogeneous(self):
        g = RadialGrid(20.0, 0.01)
        y = 2.0 * np.exp((1 - SQ5) * g.r)
        d = decompose_growth(y, Q1, GrowthEnvelope(), g.dr)
        assert d.A1 == pytest.approx(2.0, rel=1e-10)
        assert abs(d.A2) <= 1e-12
        assert d.constants == ()
        assert not np.any(np.abs(d.residual) > 1e-12)

    def test_envelope_example(self):
        g = RadialGrid(20.0, 0.01)
        y = np.exp(-1.5 * g.r)
        d = decompose_growth(y, Q1, GrowthEnvelope(((1.0, -1.5),)), g.dr)
        assert np.all(np.abs(d.residual) <= d.constant * d.envelope * (1 + 1e-12))
        assert d.constant <= 2.0

    @given(seeds)
    def test_planted_certified_at_every_node(self, seed):
        rng = generator(seed)
        g = RadialGrid(10.0, 0.01)
        ode = [Q1, Q2, Q3][seed % 3]
        l1, l2 = (float(x) for x in roots(ode))
        mu = l1 + rng.uniform(0.3, 1.0) * (l2 - l1)
        assume(min(abs(mu - l1), abs(mu - l2)) > 0.1)
        terms = ((rng.uniform(0.1, 1), mu),)
        y = plant(ode, g.r, rng.uniform(-1, 1), 0.0, terms, rng)
        d = decompose_growth(y, ode, GrowthEnvelope(terms), g.dr)
        assert np.all(np.abs(d.residual) <= d.constant * d.envelope * (1 + 1e-12) + 1e-300)

    @given(seeds)
    def test_superposition(self, seed):
        rng = generator(seed)
        g = RadialGrid(8.0, 0.01)
        env = GrowthEnvelope(((1.0, -0.5),))
        # Decaying solutions: a planted O(1) growing mode would put A1 below rounding of the data.
        ya, yb = (plant(Q2, g.r, rng.uniform(-1, 1), 0.0, env.terms, rng) for _ in range(2))
        a, b = rng.uniform(-2, 2, 2)
        da, db, dab = (decompose_growth(y, Q2, env, g.dr) for y in (ya, yb, a * ya + b * yb))
        assert dab.A1 == pytest.approx(a * da.A1 + b * db.A1, abs=1e-8)
        assert dab.A2 == pytest.approx(a * da.A2 + b * db.A2, abs=1e-8)

    @pytest.mark.parametrize("offset", [0.0, 5e-7, -5e-7])
    def test_resonant_envelope_rejected(self, offset):
        with pytest.raises(ResonanceError):
            decompose_growth(np.zeros(101), Q2, GrowthEnvelope(((1.0, -1.0 + offset),)), 0.01)

    def test_near_resonance_accepted(self):
        decompose_growth(np.zeros(101), Q2, GrowthEnvelope(((1.0, -1.0 + 2e-6),)), 0.01)

    def test_uncertifiable(self):
        g = RadialGrid(5.0, 0.01)
        with pytest.raises(DecompositionError) as exc:
            decompose_growth(np.exp(-0.2 * g.r) * np.cos(5 * g.r), Q3, GrowthEnvelope(), g.dr)
        assert exc.value.worst_index >= 0
        with pytest.raises(DecompositionError):
            decompose_growth(np.exp(0.5 * g.r), Q3, GrowthEnvelope(((1.0, -3.0),)), g.dr, max_constant=10.0)

    def test_nonfinite(self):
        with pytest.raises(DecompositionError):
            decompose_growth(np.array([0.0, np.inf, 0, 0, 0]), Q2, GrowthEnvelope(), 0.1)

    def test_minimax_never_worse(self):
        rng = np.random.default_rng(4)
        g = RadialGrid(10.0, 0.01)
        for _ in range(10):
            terms = ((1.0, 0.8),)
            y = plant(Q2, g.r, *rng.uniform(-1, 1, 2), terms, rng)
            env = GrowthEnvelope(terms)
            lsq = decompose_growth(y, Q2, env, g.dr)
            mm = decompose_growth(y, Q2, env, g.dr, fit="minimax")
            assert mm.constant <= lsq.constant * (1 + 1e-12)
        with pytest.raises(ValueError):
            decompose_growth(y, Q2, env, g.dr, fit="l2")

    def test_l1_variant(self):
        g = RadialGrid(10.0, 0.01)
        rng = np.random.default_rng(5)
        psi = np.abs(rng.normal(size=g.n)) * np.exp(-g.r)
        norm = np.trapezoid(psi, g.r) if hasattr(np, "trapezoid") else np.trapz(psi, g.r)
        y = 0.4 * np.exp(-g.r) + 0.3 * norm * np.exp(0.5 * g.r) * np.sin(g.r)
        d = decompose_growth_l1(y, Q2, 0.5, psi, g.dr)
        assert np.all(np.abs(d.residual) <= d.constant * norm * np.exp(0.5 * g.r) * (1 + 1e-9))
        with pytest.raises(ResonanceError):
            decompose_growth_l1(y, Q2, 3.0, psi, g.dr)

    def test_envelope_validation(self):
        with pytest.raises(HypothesisViolation):
            GrowthEnvelope(((-1.0, 0.0),))
        with pytest.raises(HypothesisViolation):
            GrowthEnvelope((), (0.0, [-1.0, 0.0]))


class TestTailRate:
    @given(st.floats(-4, 4))
    def test_exponential(self, lam):
        g = RadialGrid(20.0, 0.01)
        assert fit_tail_rate(g.r, 3 * np.exp(lam * g.r), (10, 20)) == pytest.approx(lam, abs=1e-9)

    def test_too_few_points(self):
        assert math.isnan(fit_tail_rate([0.0, 1.0], [0.0, 0.0]))
