"""Seeded experiment suites shared by the command line and the acceptance tests."""

import math

import numpy as np
from scipy.sparse import diags, identity, kron
from scipy.sparse.linalg import LinearOperator, eigsh, splu

from .bootstrap import BootstrapParams, Setup, check_compatibility, run_growth_certification
from .errors import DecompositionError
from .geometry import FlatTorusMetric, flat_torus_lambda1
from .grid import RadialGrid, integrate
from .norms import norm_0_lambda, poincare_check, weighted_l2
from .ode import (Q1, Q2, Q3, GrowthEnvelope, decompose_growth, decompose_growth_l1,
                  fit_tail_rate, particular_solution, roots, solve_ivp)
from .samplers import planted_instance, random_full_field, random_gram
from .tensor import TrivialEinsteinVariation

FAMILIES = {"Q1": Q1, "Q2": Q2, "Q3": Q3}
# Forcing rates keep this distance from the characteristic roots, and the
# slowest rate exceeds the decaying root by it (below that the remainder
# sinks under double-precision cancellation on long intervals).
RATE_GAP = 0.3
RATE_RANGE = (-2.0, 1.0)
# Minimum separation between the two rates of a two-term envelope.
RATE_SEPARATION = 0.5
# R-sweep forcing oscillates at least this fast so [0, 5] sees whole periods.
SWEEP_OMEGA = (2.0, 3.0)
# Certified constants above this fail the ODE-lemma suite.
ODE_CONSTANT_CAP = 1e3
R_SWEEP = (5.0, 10.0, 20.0, 40.0)
SWEEP_SPREAD = 0.1
# Tail window length and relative tolerance of the fundamental-rate check.
TAIL_WINDOW = 5.0
RATE_RTOL = 1e-4


# --- ODE lemmas --------------------------------------------------------------------

def _rates(rng, lams, count):
    """``count`` admissible forcing rates, sorted ascending."""
    lo, hi = RATE_RANGE
    while True:
        ms = np.sort(rng.uniform(lo, hi, count))
        if any(abs(m - x) <= RATE_GAP for m in ms for x in lams):
            continue
        if ms[-1] <= lams[0] + RATE_GAP:
            continue
        if count > 1 and np.min(np.diff(ms)) < RATE_SEPARATION:
            continue
        return [float(m) for m in ms]


def draw_ode_instance(rng, l1=False, sweep=False):
    """Random non-resonant instance of either lemma.

    Returns a dict with the family name, the envelope description and the
    planted homogeneous data. The growing solution enters as a far-end
    layer ``B2 env(R) e^{l2 (r - R)}``, of envelope size at ``r = R``.
    Sweep instances use one oscillating envelope term.
    """
    name = str(rng.choice(sorted(FAMILIES)))
    lams = [float(x) for x in roots(FAMILIES[name])]
    inst = {"family": name, "A1": float(rng.uniform(-1, 1)), "B2": float(rng.uniform(-1, 1))}
    wlo, whi = SWEEP_OMEGA if sweep else (0.0, SWEEP_OMEGA[1])
    if l1:
        inst["a"] = _rates(rng, lams, 1)[0]
        inst["kappa"] = float(rng.uniform(0.5, 3.0))
        inst["omega"] = float(rng.uniform(wlo, whi))
        inst["mass"] = float(rng.uniform(0.2, 2.0))
    else:
        nterms = 1 if sweep else int(rng.integers(1, 3))
        inst["terms"] = [(float(rng.uniform(0.2, 2.0)), m) for m in _rates(rng, lams, nterms)]
        inst["signs"] = [float(rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.0)) for _ in range(nterms)]
        inst["omegas"] = [float(rng.uniform(wlo, whi)) for _ in range(nterms)]
    return inst


def ode_instance_samples(inst, R, dr):
    """Samples ``y`` and the envelope of an instance on ``[0, R]``."""
    ode = FAMILIES[inst["family"]]
    l1, l2 = (float(x) for x in roots(ode))
    r = RadialGrid(R, dr).r
    if "a" in inst:
        psi = inst["mass"] * inst["kappa"] * np.exp(-inst["kappa"] * r) * (1 + np.cos(inst["omega"] * r)) / 2
        u = np.exp(inst["a"] * r) * psi * np.cos(2 * inst["omega"] * r)
        env = GrowthEnvelope((), (inst["a"], psi))
    else:
        u = np.zeros_like(r)
        for (beta, mu), s, w in zip(inst["terms"], inst["signs"], inst["omegas"]):
            u += beta * s * np.exp(mu * r) * np.cos(w * r)
        env = GrowthEnvelope(inst["terms"])
    yp, _, _ = particular_solution(ode, u, dr)
    far = inst["B2"] * env.values(r, dr)[-1]
    y = yp + inst["A1"] * np.exp(l1 * r) + far * np.exp(l2 * (r - R))
    return ode, y, env


def certify_ode_instance(inst, R, dr, fit="lsq"):
    """Decompose one instance; returns a result row.

    ``decaying_error`` compares the recovered ``A1`` with the planted one,
    relative to the envelope at ``r = 0``; it is informative only, since
    ``A1`` is not unique when the envelope dominates ``e^{l1 r}``.
    """
    ode, y, env = ode_instance_samples(inst, R, dr)
    try:
        if env.l1 is not None:
            dec = decompose_growth_l1(y, ode, env.l1[0], env.l1[1], dr, fit=fit)
        else:
            dec = decompose_growth(y, ode, env, dr, fit=fit)
    except DecompositionError as exc:
        return {"family": inst["family"], "R": R, "constant": math.inf, "decaying_error": math.inf,
                "pass": False, "error": str(exc)}
    env0 = float(env.values(np.zeros(1), dr)[0]) if env.l1 is None else float(dec.envelope[0])
    a1_err = abs(dec.A1 - inst["A1"]) / max(env0, 1e-300)
    ok = bool(np.isfinite(dec.constant) and dec.constant <= ODE_CONSTANT_CAP)
    return {"family": inst["family"], "R": R, "constant": dec.constant, "decaying_error": a1_err,
            "pass": ok}


def fundamental_rates(R=20.0, dr=0.01):
    """Tail rates of the homogeneous solutions of the three families.

    Each mode is integrated in its stable direction: the growing one forward
    from ``r = 0``, the decaying one backward from ``R``. The rate is the
    slope of ``log|y|`` on ``[R - 5, R]``; a zero rate is compared absolutely.
    """
    grid = RadialGrid(R, dr)
    zero = np.zeros(grid.n)
    window = (R - TAIL_WINDOW, R)
    rows = []
    for name, ode in FAMILIES.items():
        l1, l2 = roots(ode)
        end = np.exp(l1 * np.longdouble(R))
        for lam, sol in ((l1, solve_ivp(ode, zero, end, l1 * end, dr, direction="backward")),
                         (l2, solve_ivp(ode, zero, 1.0, l2, dr))):
            fitted = fit_tail_rate(grid.r, sol.y, window)
            err = abs(fitted - float(lam)) / (abs(float(lam)) or 1.0)
            rows.append({"family": name, "root": float(lam), "fitted": fitted, "error": err,
                         "pass": bool(err <= RATE_RTOL)})
    return rows


def sweep_instances(seed, count):
    """The seeded R-sweep instances, ``count`` per lemma, as ``(lemma, instance)``."""
    rng = np.random.default_rng([seed, 1])
    return [(lemma, draw_ode_instance(rng, l1=lemma == "l1", sweep=True))
            for lemma in ("sum", "l1") for _ in range(count)]


def sweep_constants(seed, R, dr=0.01, count=10):
    """Minimax-certified constants of the sweep instances on ``[0, R]``."""
    return [certify_ode_instance(inst, R, dr, fit="minimax")["constant"]
            for _, inst in sweep_instances(seed, count)]


def relative_spread(values):
    """``(max - min) / max``; infinite when a value is not finite."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 0.0
    if not np.all(np.isfinite(values)):
        return math.inf
    top = values.max()
    return float((top - values.min()) / top) if top > 0 else 0.0


def ode_lemma_suite(seed=0, instances=100, R=20.0, dr=0.01, r_values=R_SWEEP, sweep_count=10):
    """Plant-and-certify suites for both lemmas plus the R-independence sweep.

    The sweep certifies with the minimax fit, whose constant is the
    smallest one over all ``A1, A2`` and hence comparable across ``R``.

    Returns
    -------
    dict
        ``rows`` per instance, ``sweep`` rows with the relative spread of
        the certified constant over ``r_values``, and ``pass``.
    """
    rng = np.random.default_rng([seed, 0])
    rows, sweep = [], []
    for lemma in ("sum", "l1"):
        for i in range(instances):
            inst = draw_ode_instance(rng, l1=lemma == "l1")
            rows.append({"lemma": lemma, "index": i, **certify_ode_instance(inst, R, dr)})
    by_r = [sweep_constants(seed, Rv, dr, sweep_count) for Rv in r_values]
    for j, (lemma, inst) in enumerate(sweep_instances(seed, sweep_count)):
        consts = [c[j] for c in by_r]
        spread = relative_spread(consts)
        sweep.append({"lemma": lemma, "index": j % max(sweep_count, 1), "family": inst["family"],
                      "constants": consts, "spread": spread, "pass": bool(spread < SWEEP_SPREAD)})
    rates = fundamental_rates(R, dr)
    ok = all(r["pass"] for r in rows + sweep + rates)
    return {"rows": rows, "sweep": sweep, "rates": rates, "r_values": list(r_values),
            "pass": bool(ok)}


# --- Poincare and lambda1 ----------------------------------------------------------

def _circulant(n, coef):
    """Sparse periodic stencil ``sum_k c_k u_{i+k}``."""
    offsets, values = [], []
    for k, c in coef.items():
        offsets.append(k)
        values.append(c)
        if k:
            offsets.append(k - n if k > 0 else k + n)
            values.append(c)
    return diags(values, offsets, shape=(n, n), format="csr")


def _periodic_d1(n):
    h = 1.0 / n
    return _circulant(n, {1: 8 / (12 * h), -1: -8 / (12 * h), 2: -1 / (12 * h), -2: 1 / (12 * h)})


def _periodic_d2(n):
    h2 = (1.0 / n) ** 2
    c = 1 / (12 * h2)
    return _circulant(n, {0: -30 * c, 1: 16 * c, -1: 16 * c, 2: -c, -2: -c})


def fd_lambda1(flat, n=48):
    """First nonzero eigenvalue of the flat Laplacian by a fourth-order periodic stencil.

    Independent of the Fourier formula: the operator
    ``-sum g^{ij} d_i d_j`` is discretized on an ``n x n`` grid of lattice
    coordinates and the smallest eigenvalues are found by shift-invert.
    """
    g = flat.gram_inv
    d1 = _periodic_d1(n)
    d2 = _periodic_d2(n)
    eye = identity(n, format="csr")
    lap = g[0, 0] * kron(d2, eye) + g[1, 1] * kron(eye, d2) + 2 * g[0, 1] * kron(d1, d1)
    a = (-0.5 * (lap + lap.T)).tocsc()
    lu = splu((a + identity(n * n, format="csc")).tocsc(), permc_spec="MMD_AT_PLUS_A")
    inv = LinearOperator(a.shape, matvec=lu.solve, dtype=float)
    # Fixed start vector: ARPACK's default is random, which breaks reproducible reports.
    v0 = np.random.default_rng(0).uniform(-1, 1, n * n)
    vals = np.sort(eigsh(a, k=4, sigma=-1.0, which="LM", OPinv=inv, v0=v0, return_eigenvectors=False))
    scale = max(abs(vals).max(), 1.0)
    return float(vals[vals > 1e-8 * scale][0])


def poincare_sweep(seed=0, tori=100, fields=20, max_condition=25.0, K=2, R=2.0, dr=0.05,
                   levels=3, fd_points=48):
    """Level-wise Poincare inequality over random tori and fields, plus the lambda1 oracle."""
    rng = np.random.default_rng(seed)
    grid = RadialGrid(R, dr)
    lv = np.linspace(0, R, levels)
    rows = []
    for t in range(tori):
        flat = FlatTorusMetric(random_gram(rng, max_condition))
        lam = flat_torus_lambda1(flat)
        lam_fd = fd_lambda1(flat, fd_points)
        passed, worst = 0, 0.0
        for _ in range(fields):
            h = random_full_field(grid, flat, rng, K=K, radial_rates=(0.0, 1.0),
                                  mode_rates=(0.0, 1.0), scale=1.0)
            ok = True
            for level in lv:
                pc = poincare_check(h, float(level))
                ok = ok and pc.passed
                worst = max(worst, pc.lhs / pc.rhs if pc.rhs > 0 else 0.0)
            passed += ok
        cond = np.linalg.cond(flat.gram)
        rel = abs(lam - lam_fd) / lam
        rows.append({"torus": t, "condition": float(cond), "diameter": flat.diameter,
                     "lambda1": lam, "lambda1_fd": lam_fd, "lambda1_rel_error": rel,
                     "lambda1_diam2": lam * flat.diameter ** 2, "fields": fields,
                     "passed": passed, "worst_ratio": worst,
                     "pass": bool(passed == fields and rel <= 0.01)})
    return {"rows": rows, "pass": all(r["pass"] for r in rows)}


# --- norms ----------------------------------------------------------------------------

def norms_sweep(seed=0, lam=0.5, eta=1.5, sigmas=None, K=2, R=20.0, dr=0.01, gram=None):
    """Weighted L2 of a random forcing with ``||f||_{0,lam} = 1`` against the (iii) bound."""
    flat = FlatTorusMetric(np.eye(2) if gram is None else np.asarray(gram, dtype=float))
    grid = RadialGrid(R, dr)
    rng = np.random.default_rng(seed)
    b = 2 + lam - eta
    if sigmas is None:
        sigmas = list(np.linspace(0, max(b, 0.0), 6))
    f = random_full_field(grid, flat, rng, K=K, radial_rates=(lam, lam + 1.0),
                          mode_extra=0.0, mode_rates=(lam, lam + 1.0))
    f = f * (1.0 / norm_0_lambda(f, lam))
    rows = []
    for s in sigmas:
        value = weighted_l2(f, float(s))
        bound = math.sqrt(flat.area * integrate(np.exp((2 * s - 2 * lam - 2) * grid.r), dr))
        rows.append({"sigma": float(s), "value": value, "bound": bound, "constant": value / bound,
                     "pass": bool(value <= bound * (1 + 1e-9))})
    return {"rows": rows, "pass": all(r["pass"] for r in rows)}


# --- bootstrap --------------------------------------------------------------------------

def bootstrap_experiment(params, gram, R, dr, K, v, seed=0, amplitude=0.2, compat_samples=0):
    """Planted instance ``h = v + w`` followed by the growth certification.

    Returns
    -------
    (TrivialEinsteinVariation, GrowthReport, float, PlantedInstance)
        Recovered variation, report, componentwise recovery error and the instance.
    """
    flat = FlatTorusMetric(np.asarray(gram, dtype=float))
    grid = RadialGrid(R, dr)
    rng = np.random.default_rng(seed)
    inst = planted_instance(grid, flat, v, params.err, params.lam, rng, K=K, amplitude=amplitude)
    compat = None
    if compat_samples:
        compat = check_compatibility(Setup(flat, grid, params, K, seed), compat_samples)
    v_out, report = run_growth_certification(inst.h, inst.f, params, compatibility=compat)
    recovery = float(np.abs(v_out.matrix - v.matrix).max())
    return v_out, report, recovery, inst


def planted_variation(cfg):
    return TrivialEinsteinVariation.traceless(cfg["v11"], cfg["v12"])
