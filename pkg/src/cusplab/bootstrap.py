"""Compatibility checks, the weight bootstrap and the final growth certificates.

Every measured constant is relative to the data scale

    B = ||f||_{0,lambda} + max_{r=0} |h|_C2,

so certificates are invariant under ``(h, f) -> (c h, c f)`` wherever the
underlying estimate is homogeneous.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .cusp_operator import OperatorError, apply_L_cusp, apply_L_full, apply_L_perturbed
from .errors import (CertificationError, DecompositionError, ExtractionError, L2ViolationError,
                     ParameterError, StepError)
from .geometry import FlatTorusMetric, PerturbationEnvelope
from .grid import RadialGrid, integrate
from .norms import (WeightParams, mu_integrability, norm_0_lambda, poincare_check, weighted_h2,
                    weighted_l2)
from .ode import Q1, Q2, Q3, GrowthEnvelope, decompose_growth, fit_tail_rate
from .tensor import (RadialTensorField, TensorField, TrivialEinsteinVariation, average,
                     check_averaging_properties)

# Relative slack for inequalities between quantities computed by the same quadrature.
SLACK = 1e-9
# Comparisons of weights against the excluded point.
WEIGHT_TOL = 1e-12
# Relative agreement required between independent extractions.
UNIQUENESS_TOL = 1e-4


@dataclass(frozen=True)
class BootstrapParams:
    """Rates, perturbation size and certification thresholds.

    Parameters
    ----------
    lam, eta : float
        Forcing and perturbation decay rates.
    epsilon0 : float
        Perturbation size.
    seed : int
        Seed of the lower-order perturbation operator.
    sigma_margin : float
        Minimal distance of every weight from ``2 - eta``.
    step_factor : float
        Fraction of ``min(1, s0)`` taken per bootstrap step.
    growth_threshold : float
        Growing coefficients must stay below this times ``B``.
    trace_tol : float
        Trace of the extracted variation must stay below this times ``B``.
    constant_cap : float
        Measured constants above this count as failed certificates.
    rate_tolerance : float
        Fitted decay rate of ``|h_hat - v|`` must not exceed ``-lam`` by more.
    fiber_samples : int or None
        Fiber grid size for sampled norms (default ``2K+2``).
    """

    lam: float
    eta: float
    epsilon0: float = 0.0
    seed: int = 0
    sigma_margin: float = 0.05
    step_factor: float = 0.9
    growth_threshold: float = 1e-6
    trace_tol: float = 1e-4
    constant_cap: float = 1e4
    rate_tolerance: float = 0.05
    fiber_samples: int = None

    def __post_init__(self):
        WeightParams(self.lam, self.eta)
        if not (np.isfinite(self.epsilon0) and self.epsilon0 >= 0):
            raise ParameterError(f"epsilon0 must be nonnegative, got {self.epsilon0}")
        if not 0 < self.step_factor < 1:
            raise ParameterError("step_factor must lie in (0, 1)")
        if not self.sigma_margin > 0:
            raise ParameterError("sigma_margin must be positive")
        for name in ("growth_threshold", "trace_tol", "constant_cap", "rate_tolerance"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")

    @cached_property
    def weights(self):
        return WeightParams(self.lam, self.eta)

    @cached_property
    def err(self):
        """Seeded lower-order perturbation with envelope ``epsilon0 e^{-eta r}``."""
        return OperatorError.seeded(PerturbationEnvelope(self.epsilon0, self.eta, self.seed))

    def thresholds(self):
        return {"sigma_margin": self.sigma_margin, "step_factor": self.step_factor,
                "growth_threshold": self.growth_threshold, "trace_tol": self.trace_tol,
                "constant_cap": self.constant_cap, "rate_tolerance": self.rate_tolerance}


@dataclass(frozen=True)
class Estimate:
    """One numerically checked estimate: ``value <= bound`` under ``tag``."""

    tag: str
    value: float
    bound: float
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return {"tag": self.tag, "value": _num(self.value), "bound": _num(self.bound),
                "pass": bool(self.passed), "detail": {k: _num(v) for k, v in self.detail.items()}}


def _num(x):
    """JSON-safe number (non-finite values become strings)."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, dict):
        return {k: _num(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_num(v) for v in x]
    return x


def _estimate(tag, value, bound, **detail):
    ok = bool(np.isfinite(value) and value <= bound)
    return Estimate(tag, float(value), float(bound), ok, detail)


def _ratio(num, scale):
    """``num / scale`` with ``0/0 = 0``."""
    num = float(num)
    if num == 0:
        return 0.0
    return num / scale if scale > 0 else math.inf


def _ratio_max(num, den):
    num = np.asarray(num, dtype=float)
    den = np.broadcast_to(np.asarray(den, dtype=float), num.shape)
    active = num > 0
    if not np.any(active):
        return 0.0, 0
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(active, np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf), 0.0)
    i = int(np.argmax(q))
    return float(q[i]), i


def _as_field(h, K=None):
    if isinstance(h, RadialTensorField):
        return TensorField.from_radial(h, FlatTorusMetric.square(), 0 if K is None else K)
    return h


def _v_field(v, h):
    return TensorField.from_radial(v.field(h.grid), h.flat, h.K)


def boundary_c2(h, M=None):
    """``max_{r=0} |h|_C2`` over fiber samples."""
    h = _as_field(h)
    n = h.sample_block(slice(0, 1), M, orders=2)
    return float((n[0] + n[1] + n[2]).max())


def data_scale(h, f, params):
    """``(B, ||f||_{0,lambda}, max_{r=0}|h|_C2)``."""
    M = params.fiber_samples
    fn = norm_0_lambda(_as_field(f), params.lam, M)
    bd = boundary_c2(h, M)
    return fn + bd, fn, bd


# --- weight schedule ---------------------------------------------------------

def _margin(params):
    step = params.step_factor * min(1.0, params.weights.s0)
    return min(params.sigma_margin, step / 4, params.lam / 2)


def in_excluded_band(sigma, params):
    return abs(sigma - params.weights.sigma_star) < _margin(params) - WEIGHT_TOL


def effective_sigma(sigma, params):
    """Weight at which condition (vii) is applied.

    A weight inside the excluded band is lowered to ``sigma* - margin``;
    the bootstrap assumption at ``sigma`` implies it at every smaller weight.
    """
    if in_excluded_band(sigma, params):
        return params.weights.sigma_star - _margin(params)
    return sigma


def next_sigma(sigma, params):
    """Next weight: ``min(b, sigma + step_factor * min(1, s0))``, nudged off ``sigma*``."""
    wp = params.weights
    b = wp.b
    reach = min(1.0, wp.s0)
    target = min(b, sigma + params.step_factor * reach)
    m = _margin(params)
    if in_excluded_band(target, params):
        down, up = wp.sigma_star - m, wp.sigma_star + m
        if down > sigma + WEIGHT_TOL:
            target = down
        elif up < sigma + reach - WEIGHT_TOL and up <= b + WEIGHT_TOL:
            target = min(up, b)
        else:
            raise StepError(f"no admissible weight after {sigma}", "step_rule")
    return float(target)


def sigma_schedule(params):
    """Planned weight trajectory from 0 to ``b`` (just ``[0]`` when degenerate)."""
    wp = params.weights
    traj = [0.0]
    if wp.degenerate:
        return traj
    limit = math.ceil(wp.b / (params.step_factor * min(1.0, wp.s0))) + 2
    while traj[-1] < wp.b - WEIGHT_TOL:
        traj.append(next_sigma(effective_sigma(traj[-1], params), params))
        if len(traj) > limit + 1:
            raise StepError("weight schedule does not terminate", "step_rule")
    return traj


# --- step 1 --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Step1Result:
    """Averaged forcing, the psi profile and the measured envelope constants."""

    fc_hat: RadialTensorField
    psi: np.ndarray
    c1: float
    c2: float
    c_psi: float
    envelope_ratio: float
    worst_index: int
    passed: bool


def step1_averaged_forcing(h, f, v, params, sigma=0.0, scale=None):
    """Averaged forcing and the envelope ``c1 B e^{-lam r} + c2 eps0 psi e^{mu r}``.

    ``fc_hat`` is the average of ``L_full h``. The forcing splits as
    ``avg(f) - avg(E v) - avg(E(h - v))``; ``c1`` measures the first two
    parts against ``B e^{-lam r}``, ``c2`` the last against
    ``eps0 psi e^{mu r}``. ``psi(r) = e^{sigma r} int_T(r) |h - v|_C2``.
    """
    h, f = _as_field(h), _as_field(f)
    if scale is None:
        scale = data_scale(h, f, params)[0]
    M = params.fiber_samples
    r = h.r
    vf = _v_field(v, h)
    hv = h - vf
    fc_hat = average(apply_L_full(h))
    mean_c2 = hv.fiber_reduce(lambda n, sl: (n[0] + n[1] + n[2]).mean(axis=(0, 1)), M)
    psi = np.exp(sigma * r) * h.flat.area * np.exp(-2 * r) * mean_c2
    fhat = average(f)
    err = params.err
    ev = average(err.apply(vf))
    edev = average(err.apply(hv))
    part1 = (fhat - ev).norm()
    part2 = edev.norm()
    mu = params.weights.mu(sigma)
    eps = params.epsilon0
    c1, _ = _ratio_max(part1, scale * np.exp(-params.lam * r))
    c2, _ = _ratio_max(part2, eps * psi * np.exp(mu * r))
    env = c1 * scale * np.exp(-params.lam * r) + c2 * eps * psi * np.exp(mu * r)
    # f = L_full h + E h up to rounding; the mismatch enters the envelope check.
    mismatch = (fc_hat - (fhat - ev - edev)).norm()
    ratio, worst = _ratio_max(fc_hat.norm(), env + mismatch)
    c_psi = _ratio(integrate(psi, h.grid.dr), scale)
    cap = params.constant_cap
    ok = all(np.isfinite(x) and x <= cap for x in (c1, c2, c_psi)) and ratio <= 1 + SLACK
    return Step1Result(fc_hat, psi, c1, c2, c_psi, ratio, worst, bool(ok))


# --- step 2: extraction ---------------------------------------------------------

FAMILIES = ("trace", "h33", "y13", "y23", "z11", "z12", "z22")


def family_profiles(h_hat):
    """Scalar unknowns of the ODE families: name -> (ode, samples)."""
    r = h_hat.r
    v = h_hat.values
    e1, e2 = np.exp(r), np.exp(2 * r)
    return {
        "trace": (Q1, h_hat.trace()),
        "h33": (Q1, v[5]),
        "y13": (Q2, e1 * v[3]),
        "y23": (Q2, e1 * v[4]),
        "z11": (Q3, e2 * v[0]),
        "z12": (Q3, e2 * v[1]),
        "z22": (Q3, e2 * v[2]),
    }


@dataclass(frozen=True, eq=False)
class ExtractionCertificate:
    """Outcome of condition (vii) at one weight."""

    sigma: float
    mu: float
    v: TrivialEinsteinVariation
    growing: dict
    family_constants: dict
    trace_defect: float
    constant: float
    worst_index: int
    passed: bool

    def to_dict(self):
        return _num({"sigma": self.sigma, "mu": self.mu, "v": self.v.to_dict(),
                     "growing": self.growing, "family_constants": self.family_constants,
                     "trace_defect": self.trace_defect, "constant": self.constant,
                     "worst_index": self.worst_index, "pass": self.passed})


def extraction_envelope(params, scale, sigma, psi=None):
    """Forcing envelope for the families at weight ``sigma``.

    Terms ``B e^{-lam r}`` and ``B e^{mu r}`` with ``mu = max(mu(sigma), -lam)``,
    plus ``||eps0 psi||_L1 e^{mu r}`` when a psi profile is given.
    """
    mu = max(params.weights.mu(sigma), -params.lam)
    l1 = None
    if psi is not None and params.epsilon0 > 0:
        l1 = (mu, params.epsilon0 * np.asarray(psi))
    return GrowthEnvelope(((scale, -params.lam), (scale, mu)), l1), mu


def extract_trivial_einstein(h_hat, params, scale, sigma, psi=None):
    """Condition (vii): find ``v'`` with ``|h_hat - v'| <= c B e^{mu r}``.

    Each ODE family of ``h_hat`` is split into fundamental solutions plus a
    certified remainder. Growing coefficients must vanish (L2 side
    condition). For ``mu(sigma) > 0`` the variation is ``v' = 0``; otherwise
    ``v'_ij`` is the constant coefficient of ``e^{2r} h_ij``, which must be
    trace free.

    Raises
    ------
    ParameterError
        ``sigma`` lies in the excluded band around ``2 - eta``.
    L2ViolationError
        A growing coefficient exceeds ``growth_threshold * B``.
    ExtractionError
        The candidate is not trace free or a family admits no certificate.
    """
    if in_excluded_band(sigma, params):
        raise ParameterError(f"weight {sigma} lies within the margin of {params.weights.sigma_star}")
    h_hat = _average_of(h_hat)
    dr = h_hat.grid.dr
    env, mu_env = extraction_envelope(params, scale, sigma, psi)
    decs = {}
    for name, (ode, y) in family_profiles(h_hat).items():
        try:
            decs[name] = decompose_growth(y, ode, env, dr)
        except DecompositionError as exc:
            raise ExtractionError(f"family {name}: {exc}", "averaged_deviation_pointwise",
                                  exc.worst_index) from exc
    growing = {k: _ratio(abs(d.A2), scale) for k, d in decs.items()}
    worst_family = max(growing, key=growing.get)
    if growing[worst_family] > params.growth_threshold:
        raise L2ViolationError(
            f"growing coefficient of family {worst_family} is {growing[worst_family]:.3g} B",
            "growing_modes_eliminated")
    mu = params.weights.mu(sigma)
    if mu > 0:
        v = TrivialEinsteinVariation.zero()
        defect = 0.0
    else:
        d11, d12, d22 = decs["z11"].A1, decs["z12"].A1, decs["z22"].A1
        defect = _ratio(abs(d11 + d22), scale)
        if defect > params.trace_tol:
            raise ExtractionError(f"extracted variation has trace {d11 + d22:.3g}",
                                  "extracted_trace_free")
        v = TrivialEinsteinVariation.traceless(0.5 * (d11 - d22), d12)
    dev = (h_hat - v.field(h_hat.grid)).norm()
    c, worst = _ratio_max(dev, scale * np.exp(mu_env * h_hat.r))
    fam = {k: d.constant for k, d in decs.items()}
    ok = bool(np.isfinite(c) and c <= params.constant_cap)
    return v, ExtractionCertificate(float(sigma), float(mu), v, growing, fam, defect, c, worst, ok)


def _average_of(h):
    return h if isinstance(h, RadialTensorField) else average(h)


def fit_growing_modes(h_hat, decay_rate, scale):
    """Growing coefficients of every family relative to ``scale``.

    The envelope is ``scale e^{-decay_rate r}``, suited to L2-bounded
    fields whose profiles decay at least at that rate.
    """
    h_hat = _average_of(h_hat)
    env = GrowthEnvelope(((scale, -decay_rate),))
    out = {}
    for name, (ode, y) in family_profiles(h_hat).items():
        d = decompose_growth(y, ode, env, h_hat.grid.dr)
        out[name] = _ratio(abs(d.A2), scale)
    return out


# --- bootstrap induction -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BootstrapState:
    """Weight ``sigma``, variation ``v`` and the measured constant of (Ass_sigma)."""

    sigma: float
    v: TrivialEinsteinVariation
    bound: float
    estimates: tuple = ()

    def to_dict(self):
        return {"sigma": _num(self.sigma), "v": self.v.to_dict(), "bound": _num(self.bound),
                "estimates": [e.to_dict() for e in self.estimates]}


def initial_state(h, f, params, scale=None):
    """(Ass_0) with ``v = 0``: bound ``||h||_{H2(omega_0)} / B``."""
    h = _as_field(h)
    if scale is None:
        scale = data_scale(h, f, params)[0]
    bound = _ratio(weighted_h2(h, 0.0, params.fiber_samples), scale)
    return BootstrapState(0.0, TrivialEinsteinVariation.zero(), bound)


def bootstrap_step(state, h, f, params, scale=None):
    """One induction step: (Ass_sigma) -> (Ass_sigma') with a new variation.

    Raises
    ------
    StepError
        Any estimate fails; ``tag`` names it and ``estimates`` holds all
        estimates computed so far.
    """
    h, f = _as_field(h), _as_field(f)
    M = params.fiber_samples
    if scale is None:
        scale = data_scale(h, f, params)[0]
    sigma = effective_sigma(state.sigma, params)
    new_sigma = next_sigma(sigma, params)
    est = []

    def fail(tag, msg):
        exc = StepError(msg, tag)
        exc.estimates = tuple(est)
        return exc

    # Poincare: ||h - h_hat||_{L2(omega_{sigma+1})} <= e D ||h - v||_{H1(omega_sigma)}.
    hat = average(h)
    osc = h - TensorField.from_radial(hat, h.flat, h.K)
    hv = h - _v_field(state.v, h)
    lhs = weighted_l2(osc, state.sigma + 1)
    rhs = weighted_h2(hv, state.sigma, M)
    gain = _ratio(lhs, rhs)
    est.append(_estimate("poincare_weighted_gain", gain, np.e * h.flat.diameter * (1 + SLACK),
                         l2_relative=_ratio(lhs, scale)))

    s1 = step1_averaged_forcing(h, f, state.v, params, sigma, scale)
    cap = params.constant_cap
    est.append(_estimate("averaged_forcing_envelope", max(s1.c1, s1.c2), cap,
                         c1=s1.c1, c2=s1.c2, envelope_ratio=s1.envelope_ratio))
    est.append(_estimate("psi_l1_bound", s1.c_psi, cap))
    try:
        v_new, cert = extract_trivial_einstein(hat, params, scale, sigma, s1.psi)
    except CertificationError as exc:
        raise fail(exc.tag, str(exc)) from exc
    est.append(_estimate("growing_modes_eliminated", max(cert.growing.values()),
                         params.growth_threshold))
    est.append(_estimate("extracted_trace_free", cert.trace_defect, params.trace_tol))
    est.append(_estimate("averaged_deviation_pointwise", cert.constant, cap, mu=cert.mu))

    mi = mu_integrability(sigma, new_sigma, params.weights)
    est.append(Estimate("mu_integrability", float(mi["exponent"]), 0.0,
                        bool(mi["bounded"] and mi["expected"]), {"integrals": mi["integrals"]}))

    # ||h_hat - v'||_{L2(omega_sigma')} <= c B (area int e^{-2r} e^{2(sigma'+mu) r})^{1/2}.
    vf_new = v_new.field(h.grid)
    dev = weighted_l2(hat - vf_new, new_sigma, flat=h.flat)
    mu_env = max(params.weights.mu(sigma), -params.lam)
    kern = np.exp((2 * (new_sigma + mu_env) - 2) * h.r)
    pred = cert.constant * scale * math.sqrt(h.flat.area * integrate(kern, h.grid.dr))
    est.append(_estimate("averaged_deviation_weighted", dev, pred * (1 + SLACK) + 1e-300,
                         relative=_ratio(dev, scale)))

    hv_new = h - TensorField.from_radial(vf_new, h.flat, h.K)
    l2_new = weighted_l2(hv_new, new_sigma)
    osc_new = weighted_l2(osc, new_sigma)
    est.append(_estimate("weighted_l2_triangle", l2_new, (osc_new + dev) * (1 + SLACK) + 1e-300,
                         relative=_ratio(l2_new, scale)))

    # Weighted a priori estimate applied to h - v'.
    h2_new = weighted_h2(hv_new, new_sigma, M)
    lv = params.err.apply(TensorField.from_radial(vf_new, h.flat, h.K))
    forcing = weighted_l2(f - lv, new_sigma)
    closure = _ratio(h2_new, forcing + l2_new + boundary_c2(hv_new, M))
    est.append(_estimate("weighted_h2_closure", closure, cap, relative=_ratio(h2_new, scale)))

    bound = max(_ratio(v_new.norm(), scale), _ratio(h2_new, scale))
    est.append(_estimate("bootstrap_bound", bound, cap))
    for e in est:
        if not e.passed:
            raise fail(e.tag, f"estimate {e.tag} failed: {e.value:.6g} > {e.bound:.6g}")
    return BootstrapState(new_sigma, v_new, bound, tuple(est))


# --- final certification -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GrowthReport:
    """Trajectory, final variation and the certificates (a)-(e)."""

    params: BootstrapParams
    scale: dict
    trajectory: tuple
    extraction: ExtractionCertificate
    certificates: tuple
    rate: float
    rate_degenerate: bool
    uniqueness: dict
    compatibility: object = None
    profiles: dict = field(default_factory=dict, repr=False)

    @property
    def passed(self):
        ok = all(c.passed for c in self.certificates) and self.extraction.passed
        if self.compatibility is not None:
            ok = ok and self.compatibility.passed
        return bool(ok)

    def failing_tags(self):
        tags = [c.tag for c in self.certificates if not c.passed]
        if not self.extraction.passed:
            tags.append("final_extraction")
        if self.compatibility is not None:
            tags += [f"compat_{k}" for k, rec in self.compatibility.records.items() if not rec.passed]
        return tags

    def to_dict(self):
        p = self.params
        return _num({
            "parameters": {"lambda": p.lam, "eta": p.eta, "epsilon0": p.epsilon0, "seed": p.seed,
                           **p.weights.to_dict()},
            "thresholds": p.thresholds(),
            "measured": {"scale": self.scale, "rate": self.rate,
                         "rate_degenerate": self.rate_degenerate,
                         "extraction": self.extraction.to_dict(),
                         "uniqueness": self.uniqueness},
            "trajectory": [s.to_dict() for s in self.trajectory],
            "v": self.extraction.v.to_dict(),
            "certificates": [c.to_dict() for c in self.certificates],
            "compatibility": None if self.compatibility is None else self.compatibility.to_dict(),
            "pass": self.passed,
            "failing": self.failing_tags(),
        })


def run_growth_certification(h, f, params, compatibility=None, rate_window=None):
    """Bootstrap from ``sigma = 0`` to ``b`` and certify the growth estimates.

    Parameters
    ----------
    h, f : TensorField
        Solution and forcing with ``L h = f``.
    params : BootstrapParams
    compatibility : CompatibilityReport, optional
        Attached to the report; its failures fail the run.
    rate_window : (float, float), optional
        Fit window for the decay rate of ``|h_hat - v|`` (default ``[1, R/2]``).

    Returns
    -------
    (TrivialEinsteinVariation, GrowthReport)
    """
    h, f = _as_field(h), _as_field(f)
    M = params.fiber_samples
    B, fnorm, bd = data_scale(h, f, params)
    wp = params.weights
    state = initial_state(h, f, params, B)
    traj = [state]
    extractions = []
    if not wp.degenerate:
        limit = math.ceil(wp.b / (params.step_factor * min(1.0, wp.s0))) + 1
        while state.sigma < wp.b - WEIGHT_TOL:
            state = bootstrap_step(state, h, f, params, B)
            traj.append(state)
            if state.v.norm() > 0:
                extractions.append(state.v)
            if len(traj) > limit + 1:
                raise StepError("bootstrap did not reach b", "step_rule")
    sigma = effective_sigma(state.sigma, params)
    s1 = step1_averaged_forcing(h, f, state.v, params, sigma, B)
    hat = average(h)
    v, cert = extract_trivial_einstein(hat, params, B, sigma, s1.psi)
    r = h.r
    lam = params.lam
    cap = params.constant_cap
    vfield = TensorField.from_radial(v.field(h.grid), h.flat, h.K)
    dev_hat = (hat - v.field(h.grid)).norm()
    dev = (h - vfield).max_norm(M)
    hmax = h.max_norm(M)
    c1_norm = float(h.max_c1_norm(M).max())
    certs = (
        _estimate("a_variation_bound", _ratio(v.norm(), B), cap),
        _estimate("b_averaged_decay", _ratio_max(np.exp(lam * r) * dev_hat, B)[0], cap),
        _estimate("c_pointwise_deviation",
                  _ratio_max(dev, B * np.exp(-lam * r) + c1_norm * np.exp(-r))[0], cap),
        _estimate("d_weighted_deviation",
                  _ratio_max(np.exp(lam * r) * dev, B + np.exp(-(1 - lam) * r))[0], cap),
        _estimate("e_solution_bound", _ratio_max(hmax, B + np.exp(-r))[0], cap),
    )
    window = rate_window or (1.0, h.grid.R / 2)
    degenerate = bool(dev_hat.max() < 1e-12 * max(B, 1e-300))
    rate = float("nan") if degenerate else fit_tail_rate(r, dev_hat, window)
    rate_ok = degenerate or (np.isfinite(rate) and rate <= -lam + params.rate_tolerance)
    certs += (Estimate("decay_rate", rate, -lam + params.rate_tolerance, bool(rate_ok),
                       {"degenerate": degenerate}),)
    uniq = {"compared": False}
    if extractions:
        w = extractions[-1]
        diff = _ratio(np.abs(v.matrix - w.matrix).max(), max(v.norm(), w.norm()))
        uniq = {"compared": True, "relative_difference": diff, "pass": diff <= UNIQUENESS_TOL}
        certs += (_estimate("uniqueness", diff, UNIQUENESS_TOL),)
    profiles = {"r": r, "h": hmax, "hat_minus_v": dev_hat, "h_minus_v": dev, "psi": s1.psi}
    report = GrowthReport(params, {"B": B, "f_norm_0_lambda": fnorm, "boundary_c2": bd,
                                   "boundary_contract": _ratio(bd, fnorm)},
                          tuple(traj), cert, certs, rate, degenerate, uniq, compatibility, profiles)
    return v, report


# --- compatibility ---------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionRecord:
    """Result of one compatibility condition."""

    name: str
    passed: bool
    constant: float
    samples: int
    worst: dict = field(default_factory=dict)
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return _num({"name": self.name, "pass": self.passed, "constant": self.constant,
                     "samples": self.samples, "worst": self.worst, "detail": self.detail})


CONDITIONS = ("i", "ii", "iii", "iv", "v", "vi", "vii")


@dataclass(frozen=True)
class CompatibilityReport:
    """One record per condition (i)-(vii)."""

    records: dict
    parameters: dict

    def __post_init__(self):
        if tuple(self.records) != CONDITIONS:
            raise ValueError("compatibility report must hold conditions (i)-(vii) in order")

    @property
    def passed(self):
        return all(r.passed for r in self.records.values())

    def to_dict(self):
        return {"parameters": _num(self.parameters), "pass": self.passed,
                "conditions": {k: r.to_dict() for k, r in self.records.items()}}


@dataclass(frozen=True)
class Setup:
    """Geometry, grid, Fourier truncation and bootstrap parameters."""

    flat: FlatTorusMetric
    grid: RadialGrid
    params: BootstrapParams
    K: int = 2
    seed: int = 0


def _worst(records, key):
    if not records:
        return 0.0, {}
    i = int(np.argmax([x[key] for x in records]))
    return float(records[i][key]), records[i]


def check_compatibility(setup, samples=8):
    """Empirical check of conditions (i)-(vii).

    Constants are measured over ``samples`` seeded random fields at every
    weight of the planned schedule; the planted instances for (vii) use the
    same seeds.
    """
    from .samplers import planted_instance, random_full_field, random_trivial_variation

    p = setup.params
    wp = p.weights
    grid, flat, K = setup.grid, setup.flat, setup.K
    M = p.fiber_samples
    cap = p.constant_cap
    err = p.err
    rng = np.random.default_rng(setup.seed)
    sigmas = sigma_schedule(p)
    fields = [random_full_field(grid, flat, rng, K=K, radial_rates=(0.3, 2.0),
                                mode_extra=2 + wp.lam, mode_rates=(0.3, 1.0), scale=0.5)
              for _ in range(samples)]
    images = [apply_L_perturbed(h, err) for h in fields]
    recs = {}

    # (i) weighted a priori estimate and (ii) unweighted L2 estimate.
    rows_i, rows_ii = [], []
    for j, (h, lh) in enumerate(zip(fields, images)):
        bd = boundary_c2(h, M)
        for s in sigmas:
            l2 = weighted_l2(h, s)
            c = _ratio(weighted_h2(h, s, M), weighted_l2(lh, s) + l2 + bd)
            rows_i.append({"sample": j, "sigma": s, "constant": c})
        rows_ii.append({"sample": j, "constant": _ratio(weighted_l2(h, 0.0), weighted_l2(lh, 0.0) + bd)})
    for key, rows in (("i", rows_i), ("ii", rows_ii)):
        c, w = _worst(rows, "constant")
        recs[key] = ConditionRecord(key, bool(np.isfinite(c) and c <= cap), c, len(rows), w)

    # (iii) ||f||_{L2(omega_sigma)} <= (area int e^{(2 sigma - 2 lam - 2) r})^{1/2} ||f||_{0,lam}.
    rows = []
    for j, lh in enumerate(images):
        fn = norm_0_lambda(lh, wp.lam, M)
        for s in sigmas + [wp.b] * (wp.b >= 0):
            bound = math.sqrt(flat.area * integrate(np.exp((2 * s - 2 * wp.lam - 2) * grid.r), grid.dr))
            rows.append({"sample": j, "sigma": s, "constant": _ratio(weighted_l2(lh, s), bound * fn)})
    c, w = _worst(rows, "constant")
    recs["iii"] = ConditionRecord("iii", bool(c <= 1 + SLACK), c, len(rows), w)

    # (iv) kernel, regularity, weighted L2 of L v and invariance under averaging.
    res, reg, lv_c, inv = 0.0, 0.0, 0.0, 0.0
    for j in range(samples):
        v = random_trivial_variation(rng)
        vf = v.field(grid)
        res = max(res, float(np.abs(apply_L_cusp(vf).values).max()))
        reg = max(reg, float(vf.c2_norm().max()) / v.norm())
        emb = TensorField.from_radial(vf, flat, K)
        lv = apply_L_perturbed(emb, err)
        for s in sigmas:
            lv_c = max(lv_c, _ratio(weighted_l2(lv, s), max(p.epsilon0, 1e-300) * v.norm()))
        inv = max(inv, float(np.abs(average(emb).values - vf.values).max()))
    ok = res <= 1e-6 and inv == 0.0 and reg <= cap and (p.epsilon0 == 0 or lv_c <= cap)
    recs["iv"] = ConditionRecord("iv", bool(ok), reg, samples, {},
                                 {"kernel_residual": res, "regularity": reg,
                                  "weighted_l2_of_Lv_over_eps0": lv_c if p.epsilon0 > 0 else 0.0,
                                  "average_invariance": inv})

    # (v) level-wise Poincare inequality.
    levels = np.linspace(0, grid.R, 5)
    rows, fails = [], 0
    for j, h in enumerate(fields):
        for lev in levels:
            pc = poincare_check(h, lev, M)
            fails += not pc.passed
            rows.append({"sample": j, "r": float(lev), "constant": _ratio(pc.lhs, pc.rhs)})
    c, w = _worst(rows, "constant")
    recs["v"] = ConditionRecord("v", fails == 0, c, len(rows), w,
                                {"factor": float(np.e ** 2), "failures": fails})

    # (vi) pointwise |h - h_hat| <= C diam(T(r)) max |h|_C1.
    rows = [{"sample": j, "constant": check_averaging_properties(h, M)["v"]}
            for j, h in enumerate(fields)]
    c, w = _worst(rows, "constant")
    recs["vi"] = ConditionRecord("vi", bool(np.isfinite(c) and c <= cap), c, len(rows), w)

    # (vii) extraction on planted instances at every scheduled weight.
    rows, ok, worst_err = [], True, {}
    planted_count = max(1, min(samples, 2))
    for j in range(planted_count):
        v = TrivialEinsteinVariation.traceless(*rng.uniform(-0.5, 0.5, 2))
        inst = planted_instance(grid, flat, v, err, wp.lam, rng, K=K)
        B = data_scale(inst.h, inst.f, p)[0]
        for s in sigmas:
            se = effective_sigma(s, p)
            try:
                s1 = step1_averaged_forcing(inst.h, inst.f, TrivialEinsteinVariation.zero(), p, se, B)
                vx, cert = extract_trivial_einstein(average(inst.h), p, B, se, s1.psi)
            except CertificationError as exc:
                ok = False
                worst_err = {"sample": j, "sigma": s, "error": str(exc), "tag": exc.tag}
                continue
            recov = float(np.abs(vx.matrix - v.matrix).max()) if cert.mu <= 0 else 0.0
            ok = ok and cert.passed and recov <= 1e-3
            rows.append({"sample": j, "sigma": s, "constant": cert.constant, "recovery": recov})
    c, w = _worst(rows, "constant")
    recs["vii"] = ConditionRecord("vii", bool(ok), c, len(rows), worst_err or w)

    params = {"lambda": wp.lam, "eta": wp.eta, "epsilon0": p.epsilon0, "b": wp.b, "s0": wp.s0,
              "sigma_star": wp.sigma_star, "degenerate": wp.degenerate, "schedule": sigmas}
    return CompatibilityReport(recs, params)
