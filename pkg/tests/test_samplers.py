import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cusplab.cusp_operator import OperatorError, apply_L_perturbed
from cusplab.geometry import FlatTorusMetric, PerturbationEnvelope
from cusplab.grid import RadialGrid
from cusplab.samplers import (planted_instance, random_full_field, random_gram, random_profile,
                              random_radial_field)
from cusplab.tensor import TrivialEinsteinVariation, frame_weights

from strategies import flat_tori, generator, seeds

GRID = RadialGrid(3.0, 0.001)


def fd(values, dr):
    return np.gradient(values, dr, axis=-1, edge_order=2)


@given(seeds)
def test_profile_derivatives(seed):
    rng = generator(seed)
    prof = random_profile(rng, rng.uniform(0.3, 2.0, 3))
    y, y1, y2 = prof.evaluate(GRID.r)
    inner = slice(2, -2)
    np.testing.assert_allclose(fd(y, GRID.dr)[inner], y1[inner], atol=1e-5)
    np.testing.assert_allclose(fd(y1, GRID.dr)[inner], y2[inner], atol=1e-5)


@given(seeds)
def test_radial_field_derivatives_and_decay(seed):
    rng = generator(seed)
    h = random_radial_field(GRID, rng, 0.3, 2.0)
    inner = slice(2, -2)
    np.testing.assert_allclose(fd(h.values, GRID.dr)[:, inner], h.d1[:, inner], atol=1e-5)
    np.testing.assert_allclose(fd(h.d1, GRID.dr)[:, inner], h.d2[:, inner], atol=1e-4)
    weighted = np.abs(h.values * frame_weights(GRID.r))
    assert np.all(weighted <= 2.0 * np.exp(-0.3 * GRID.r) + 1e-15)


@given(seeds, st.floats(1.0, 50.0))
def test_gram_condition(seed, cap):
    g = random_gram(generator(seed), cap)
    np.testing.assert_array_equal(g, g.T)
    ev = np.linalg.eigvalsh(g)
    assert ev.min() > 0
    assert ev.max() / ev.min() <= cap * (1 + 1e-9)


@given(seeds, flat_tori())
def test_full_field_reality_and_derivatives(seed, flat):
    g = RadialGrid(2.0, 0.001)
    h = random_full_field(g, flat, generator(seed), K=2)
    c = h.coeffs
    np.testing.assert_array_equal(c, np.conj(c[:, ::-1, ::-1]))
    inner = slice(2, -2)
    np.testing.assert_allclose(fd(c, g.dr)[..., inner], h.d1[..., inner], atol=1e-5)


def test_determinism():
    a = random_full_field(GRID, FlatTorusMetric.square(), np.random.default_rng(3))
    b = random_full_field(GRID, FlatTorusMetric.square(), np.random.default_rng(3))
    assert a.coeffs.tobytes() == b.coeffs.tobytes()


def test_planted_instance_consistent():
    g = RadialGrid(5.0, 0.01)
    v = TrivialEinsteinVariation.traceless(0.3, -0.1)
    err = OperatorError.seeded(PerturbationEnvelope(1e-3, 1.5, 2))
    inst = planted_instance(g, FlatTorusMetric.square(), v, err, 0.5, np.random.default_rng(0))
    np.testing.assert_array_equal(inst.f.coeffs, apply_L_perturbed(inst.h, err).coeffs)
    K = inst.h.K
    np.testing.assert_allclose(inst.h.coeffs[:, K, K].real - inst.w.coeffs[:, K, K].real,
                               v.field(g).values, atol=1e-14)
    # Contamination decays at the planted rate in the weighted frame.
    weighted = np.abs(inst.w.coeffs[:, K, K].real * frame_weights(g.r))
    assert np.all(weighted <= 2 * 0.2 * np.exp(-0.5 * g.r) + 1e-15)


@pytest.mark.parametrize("K", [0, 1, 3])
def test_mode_count(K):
    h = random_full_field(GRID, FlatTorusMetric.square(), np.random.default_rng(1), K=K)
    assert h.coeffs.shape == (6, 2 * K + 1, 2 * K + 1, GRID.n)
