"""The cusp operator as a radial ODE system, its modewise extension and inverse.

On a radial tensor ``h`` with ``f = L_cusp h``:

    f33  = -1/2 [h33'' - 2 h33' - 4 h33]
    fi3  = -1/2 e^{-r}  [y'' - 2 y' - 3 y],            y = e^r h_i3
    fij  = -1/2 e^{-2r} [z'' - 2 z' - 2 d_ij (tr h - h33)], z = e^{2r} h_ij

which expands to ``fi3 = -1/2 (h'' - 4 h)`` and
``fij = -1/2 (h'' + 2 h') + d_ij (h11 + h22)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import BoundaryError, EnvelopeViolation, GridError, ParameterError, ResonanceError
from .geometry import PerturbationEnvelope
from .grid import radial_derivatives
from .ode import Q1, Q2, Q3, RESONANCE_TOL, fit_tail_rate, particular_solution, roots
from .tensor import RadialTensorField, TensorField, frame_weights

_MIN_NODES = 5


def _cusp_system(c, d1, d2):
    """Apply the radial system to coefficient arrays with the radial axis last."""
    if c.shape[-1] < _MIN_NODES:
        raise GridError(f"need at least {_MIN_NODES} radial nodes for second derivatives")
    out = np.empty_like(c)
    out[5] = -0.5 * (d2[5] - 2 * d1[5] - 4 * c[5])
    out[3:5] = -0.5 * (d2[3:5] - 4 * c[3:5])
    out[0:3] = -0.5 * (d2[0:3] + 2 * d1[0:3])
    fiber_trace = c[0] + c[2]
    out[0] += fiber_trace
    out[2] += fiber_trace
    return out


def apply_L_cusp(h):
    """``L_cusp h`` for a radial field, using its stored radial derivatives."""
    f = _cusp_system(h.values, h.d1, h.d2)
    return RadialTensorField(h.grid, f)


def trace_ode_residual(h, f, relative=True):
    """Max residual of ``tr(h)'' - 2 tr(h)' - 4 tr(h) + 2 tr(f)``.

    Derivatives of ``tr(h)`` are taken by fourth-order differences of the
    trace samples, independently of how ``f`` was produced. With
    ``relative=True`` the residual at each node is divided by
    ``max(1, |tr| + |tr'| + |tr''|)`` so exponentially large traces are
    judged by their discretization error.
    """
    tr = h.trace()
    t1, t2 = radial_derivatives(tr, h.grid.dr)
    res = np.abs(t2 - 2 * t1 - 4 * tr + 2 * f.trace())
    if relative:
        res = res / np.maximum(1.0, np.abs(tr) + np.abs(t1) + np.abs(t2))
    return float(res.max())


def apply_L_full(h):
    """Modewise extension of ``L_cusp`` to a full tensor field.

    Every Fourier mode obeys the radial system; modes ``k != 0`` gain the
    fiber term ``1/2 e^{2r} lambda_k`` times the coefficient with
    ``lambda_k = 4 pi^2 |k|^2_dual``. The k=0 slice equals ``L_cusp`` of the
    average.
    """
    if isinstance(h, RadialTensorField):
        return apply_L_cusp(h)
    c = h.coeffs
    out = _cusp_system(c, h.dr1, h.dr2)
    lam = h.eigenvalues[None, :, :, None]
    out = out + 0.5 * np.exp(2 * h.r)[None, None, None, :] * lam * c
    return TensorField(h.grid, h.flat, out)


@dataclass(frozen=True, eq=False)
class OperatorError:
    """Seeded lower-order perturbation ``E`` with ``|E h| <= eps0 e^{-eta r} |h|_C2``.

    In orthonormal frame coordinates ``W h`` (``W = diag(w(r))``)

        W E h = eps0 e^{-eta r} (M0 W h + M1 W h_r + M2 W h_rr)

    with seeded 6x6 matrices of spectral norm at most 1.
    """

    envelope: PerturbationEnvelope
    couplings: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.couplings, dtype=float)
        if m.shape != (3, 6, 6):
            raise ParameterError("couplings must have shape (3, 6, 6)")
        if max(np.linalg.norm(x, 2) for x in m) > 1 + 1e-12:
            raise ParameterError("coupling matrices must have spectral norm <= 1")
        m.setflags(write=False)
        object.__setattr__(self, "couplings", m)

    @classmethod
    def seeded(cls, envelope):
        rng = np.random.default_rng(envelope.seed)
        mats = []
        for _ in range(3):
            a = rng.uniform(-1, 1, size=(6, 6))
            a *= rng.uniform(0.5, 1.0) / np.linalg.norm(a, 2)
            mats.append(a)
        return cls(envelope, np.array(mats))

    def _apply(self, c, d1, d2, r):
        w = frame_weights(r)
        shape = (6,) + (1,) * (c.ndim - 2) + (r.shape[0],)
        w = w.reshape(shape)
        m0, m1, m2 = self.couplings
        mixed = (np.tensordot(m0, w * c, axes=(1, 0)) + np.tensordot(m1, w * d1, axes=(1, 0))
                 + np.tensordot(m2, w * d2, axes=(1, 0)))
        return self.envelope(r) * mixed / w

    def apply(self, h):
        """``E h`` for a radial or full field."""
        if isinstance(h, RadialTensorField):
            return RadialTensorField(h.grid, self._apply(h.values, h.d1, h.d2, h.r))
        return TensorField(h.grid, h.flat, self._apply(h.coeffs, h.dr1, h.dr2, h.r))


def check_error_envelope(err, h, eh, M=None, slack=1e-9):
    """Max of ``|E h| / (eps0 e^{-eta r} |h|_C2)`` over sampled points.

    Raises ``EnvelopeViolation`` when the ratio exceeds ``1 + slack``.
    """
    if isinstance(h, RadialTensorField):
        lhs = eh.norm()
        rhs = err.envelope(h.r) * h.c2_norm()
    else:
        M = h.sample_size(M)
        lhs = np.concatenate([n[0] for _, n in eh.iter_samples(M, 0)], axis=-1)
        c2 = np.concatenate([n[0] + n[1] + n[2] for _, n in h.iter_samples(M, 2)], axis=-1)
        rhs = err.envelope(h.r) * c2
    tiny = 1e-300
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(lhs > tiny, lhs / np.maximum(rhs, tiny), 0.0)
    worst = float(ratio.max()) if ratio.size else 0.0
    if worst > 1 + slack:
        raise EnvelopeViolation(f"perturbation envelope exceeded by factor {worst:.6g}")
    return worst


def apply_L_perturbed(h, err, check=True):
    """``L h = L_full h + E h``; the envelope of ``E`` is asserted on output."""
    eh = err.apply(h)
    if check and err.envelope.epsilon0 > 0:
        check_error_envelope(err, h, eh)
    return apply_L_full(h) + eh


# --- inverse solve ---------------------------------------------------------

def _family_forcings(f):
    """Scalar forcings of the decoupled families for a radial forcing ``f``."""
    r = f.r
    e1, e2 = np.exp(r), np.exp(2 * r)
    v = f.values
    return {
        "h33": (Q1, -2 * v[5]),
        "S": (Q1, -2 * e2 * (v[0] + v[2])),
        "D": (Q3, -2 * e2 * (v[0] - v[2])),
        "z12": (Q3, -2 * e2 * v[1]),
        "y13": (Q2, -2 * e1 * v[3]),
        "y23": (Q2, -2 * e1 * v[4]),
    }


def _check_forcing_resonance(name, ode, u, r):
    # A clean exponential tail at a characteristic rate would need r e^{lam r} terms.
    half = r >= r[-1] / 2
    tail = u[half]
    if np.all(tail > 0) or np.all(tail < 0):
        rate = fit_tail_rate(r[half], tail)
        fit = np.polyfit(r[half], np.log(np.abs(tail)), 1)
        clean = np.abs(np.polyval(fit, r[half]) - np.log(np.abs(tail))).max() < 1e-8
        for lam in roots(ode):
            if clean and abs(rate - float(lam)) < RESONANCE_TOL:
                raise ResonanceError(f"forcing of family {name} is resonant at rate {float(lam)}")


def solve_L_cusp(f, boundary_h0, boundary_dh0=None, select_decaying=True, tol=1e-8):
    """Solve ``L_cusp h = f`` family by family by variation of parameters.

    Parameters
    ----------
    f : RadialTensorField
    boundary_h0 : array_like, shape (6,)
        Component values of ``h`` at ``r = 0``.
    boundary_dh0 : array_like, shape (6,), optional
        Radial derivatives at ``r = 0``. Required when
        ``select_decaying=False``; otherwise only checked for consistency.
    select_decaying : bool
        Drop the fundamental solutions growing like ``e^{(1+sqrt5) r}``,
        ``e^{3r}``, ``e^{2r}``.
    tol : float
        Relative tolerance for the consistency check of ``boundary_dh0``.

    Returns
    -------
    RadialTensorField
        Solution with exact derivative samples from the ODE.
    """
    h0 = np.asarray(boundary_h0, dtype=float).reshape(6)
    dh0 = None if boundary_dh0 is None else np.asarray(boundary_dh0, dtype=float).reshape(6)
    if not select_decaying and dh0 is None:
        raise BoundaryError("derivative data is required when growing modes are kept")
    r, dr = f.r, f.grid.dr
    # Initial data of the scalar unknowns.
    init = {
        "h33": (h0[5], None if dh0 is None else dh0[5]),
        "S": (h0[0] + h0[2], None if dh0 is None else dh0[0] + dh0[2] + 2 * (h0[0] + h0[2])),
        "D": (h0[0] - h0[2], None if dh0 is None else dh0[0] - dh0[2] + 2 * (h0[0] - h0[2])),
        "z12": (h0[1], None if dh0 is None else dh0[1] + 2 * h0[1]),
        "y13": (h0[3], None if dh0 is None else dh0[3] + h0[3]),
        "y23": (h0[4], None if dh0 is None else dh0[4] + h0[4]),
    }
    sol = {}
    for name, (ode, u) in _family_forcings(f).items():
        _check_forcing_resonance(name, ode, u, r)
        yp_, dyp, ddyp = particular_solution(ode, u, dr)
        l1, l2 = (float(x) for x in roots(ode))
        y0, d0 = init[name]
        a0, b0 = y0 - yp_[0], None if d0 is None else d0 - dyp[0]
        if select_decaying:
            A1, A2 = a0, 0.0
            if b0 is not None:
                scale = max(1.0, abs(d0), abs(dyp[0]), abs(l1 * A1))
                if abs(l1 * A1 - b0) > tol * scale:
                    raise BoundaryError(
                        f"family {name}: derivative data {d0} inconsistent with the decaying "
                        f"solution (needs {dyp[0] + l1 * A1})")
        else:
            A1, A2 = np.linalg.solve([[1.0, 1.0], [l1, l2]], [a0, b0])
        e1 = np.exp(l1 * r)
        e2 = np.exp(l2 * r) if A2 != 0 else np.zeros_like(r)
        y = yp_ + A1 * e1 + A2 * e2
        dy = dyp + l1 * A1 * e1 + l2 * A2 * e2
        ddy = ddyp + l1 * l1 * A1 * e1 + l2 * l2 * A2 * e2
        sol[name] = (y, dy, ddy)
    return _assemble(f.grid, sol)


def _assemble(grid, sol):
    r = grid.r
    vals = np.zeros((6, grid.n))
    d1 = np.zeros_like(vals)
    d2 = np.zeros_like(vals)

    def put(i, y, dy, ddy, k):
        # h = e^{-k r} y
        e = np.exp(-k * r)
        vals[i] = e * y
        d1[i] = e * (dy - k * y)
        d2[i] = e * (ddy - 2 * k * dy + k * k * y)

    put(5, *sol["h33"], 0)
    S, D = sol["S"], sol["D"]
    put(0, *[(a + b) / 2 for a, b in zip(S, D)], 2)
    put(2, *[(a - b) / 2 for a, b in zip(S, D)], 2)
    put(1, *sol["z12"], 2)
    put(3, *sol["y13"], 1)
    put(4, *sol["y23"], 1)
    return RadialTensorField(grid, vals, d1, d2)
