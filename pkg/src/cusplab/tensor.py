"""Symmetric (0,2)-tensor fields on T^2 x [0, R] in cusp coordinates.

Components are stored in the order ``(h11, h12, h22, h13, h23, h33)``.
The pointwise norm with respect to ``g = e^{-2r} g_flat + dr^2`` is the
Euclidean norm of the frame-weighted vector ``w(r) * h`` with

    w(r) = (e^{2r}, sqrt2 e^{2r}, e^{2r}, sqrt2 e^r, sqrt2 e^r, 1).

Derivative norms follow the same convention: every radial or fiber
derivative component is weighted as above, and each fiber direction adds a
factor ``e^r`` (the orthonormal fiber frame is ``e^r d/dx``):

    |Dh|^2   = |h_r|^2 + e^{2r} (|d1 h|^2 + |d2 h|^2)
    |D^2h|^2 = |h_rr|^2 + 2 e^{2r} (|d1 h_r|^2 + |d2 h_r|^2)
               + e^{4r} (|d11 h|^2 + 2 |d12 h|^2 + |d22 h|^2)
    |h|_C1 = |h| + |Dh|,   |h|_C2 = |h| + |Dh| + |D^2h|.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import fft as sfft

from .errors import DataError, GridError, ParameterError
from .geometry import FlatTorusMetric
from .grid import RadialGrid, radial_derivatives

COMPONENTS = ("h11", "h12", "h22", "h13", "h23", "h33")
WEIGHT_EXP = np.array([2.0, 2.0, 2.0, 1.0, 1.0, 0.0])
WEIGHT_COEF = np.array([1.0, np.sqrt(2), 1.0, np.sqrt(2), np.sqrt(2), 1.0])
# Radial nodes per chunk when sampling fibers.
CHUNK = 128


def frame_weights(r):
    """Frame weights ``w(r)``, shape (6, len(r))."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    return WEIGHT_COEF[:, None] * np.exp(np.outer(WEIGHT_EXP, r))


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _check_finite(*arrays):
    for a in arrays:
        if a is not None and not np.all(np.isfinite(a)):
            raise DataError("non-finite samples in tensor field")


@dataclass(frozen=True, eq=False)
class RadialTensorField:
    """Tensor depending only on ``r``: six component profiles on a grid.

    Parameters
    ----------
    grid : RadialGrid
    values : array_like, shape (6, N)
    d1, d2 : array_like, shape (6, N), optional
        Exact first and second radial derivatives; fourth-order finite
        differences are used when omitted.
    """

    grid: RadialGrid
    values: np.ndarray
    d1: np.ndarray = None
    d2: np.ndarray = None

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (6, self.grid.n):
            raise GridError(f"values must have shape (6, {self.grid.n}), got {vals.shape}")
        _check_finite(vals, self.d1, self.d2)
        if self.d1 is None or self.d2 is None:
            fd1, fd2 = radial_derivatives(vals, self.grid.dr)
        d1 = fd1 if self.d1 is None else self.d1
        d2 = fd2 if self.d2 is None else self.d2
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "d1", _frozen(d1))
        object.__setattr__(self, "d2", _frozen(d2))

    @classmethod
    def zeros(cls, grid):
        z = np.zeros((6, grid.n))
        return cls(grid, z, z, z)

    @classmethod
    def from_components(cls, grid, **components):
        """Build from named component arrays; missing components are zero."""
        vals = np.zeros((6, grid.n))
        for name, arr in components.items():
            if name not in COMPONENTS:
                raise KeyError(f"unknown component {name!r}")
            vals[COMPONENTS.index(name)] = np.broadcast_to(arr, (grid.n,))
        return cls(grid, vals)

    @property
    def r(self):
        return self.grid.r

    def component(self, name):
        return self.values[COMPONENTS.index(name)]

    def weighted(self):
        """Frame-weighted components ``w(r) * h``."""
        return frame_weights(self.r) * self.values

    def norm(self):
        """Pointwise norm at every grid node."""
        return np.sqrt(np.sum(self.weighted() ** 2, axis=0))

    def trace(self):
        """Trace ``h33 + e^{2r}(h11 + h22)`` at every node."""
        return self.values[5] + np.exp(2 * self.r) * (self.values[0] + self.values[2])

    def derivative_norms(self):
        """``(|h|, |Dh|, |D^2h|)`` at every node (radial derivatives only)."""
        w = frame_weights(self.r)
        return (np.sqrt(np.sum((w * self.values) ** 2, axis=0)),
                np.sqrt(np.sum((w * self.d1) ** 2, axis=0)),
                np.sqrt(np.sum((w * self.d2) ** 2, axis=0)))

    def c1_norm(self):
        n0, n1, _ = self.derivative_norms()
        return n0 + n1

    def c2_norm(self):
        n0, n1, n2 = self.derivative_norms()
        return n0 + n1 + n2

    def scaled(self, c):
        return RadialTensorField(self.grid, c * self.values, c * self.d1, c * self.d2)

    def __add__(self, other):
        _same_grid(self.grid, other.grid)
        return RadialTensorField(self.grid, self.values + other.values,
                                 self.d1 + other.d1, self.d2 + other.d2)

    def __sub__(self, other):
        return self + other.scaled(-1.0)

    def __mul__(self, c):
        return self.scaled(float(c))

    __rmul__ = __mul__


def _same_grid(a, b):
    if a.n != b.n or a.dr != b.dr:
        raise GridError("fields live on different grids")


def _at(h, r):
    return h.grid.index(r)


def pointwise_norm(h, r=None):
    """Pointwise norm of a radial field at radius ``r`` (all nodes if None)."""
    out = h.norm()
    return out if r is None else float(out[_at(h, r)])


def trace(h, r=None):
    """Trace with respect to the cusp metric at ``r`` (all nodes if None)."""
    out = h.trace()
    return out if r is None else float(out[_at(h, r)])


@dataclass(frozen=True)
class TrivialEinsteinVariation:
    """Constant traceless matrix ``v_ij`` inducing ``e^{-2r} v_ij dx^i dx^j``."""

    v11: float
    v12: float
    v22: float

    def __post_init__(self):
        for x in (self.v11, self.v12, self.v22):
            if not np.isfinite(x):
                raise ParameterError("trivial Einstein variation entries must be finite")
        if self.v11 + self.v22 != 0:
            raise ParameterError(f"trivial Einstein variation must be trace free, got trace {self.v11 + self.v22}")

    @classmethod
    def traceless(cls, v11, v12):
        return cls(float(v11), float(v12), -float(v11))

    @classmethod
    def zero(cls):
        return cls(0.0, 0.0, 0.0)

    @property
    def matrix(self):
        return np.array([[self.v11, self.v12], [self.v12, self.v22]])

    def norm(self):
        """Constant pointwise norm ``sqrt(v11^2 + 2 v12^2 + v22^2)``."""
        return float(np.sqrt(self.v11 ** 2 + 2 * self.v12 ** 2 + self.v22 ** 2))

    def field(self, grid):
        """The induced radial field with exact derivatives."""
        e = np.exp(-2 * grid.r)
        c = np.array([self.v11, self.v12, self.v22, 0, 0, 0])[:, None]
        return RadialTensorField(grid, c * e, -2 * c * e, 4 * c * e)

    def to_dict(self):
        return {"v11": self.v11, "v12": self.v12, "v22": self.v22}


@dataclass(frozen=True, eq=False)
class TensorField:
    """Tensor field as truncated Fourier series per component and radial node.

    ``coeffs[c, K + k1, K + k2, i]`` is the coefficient of
    ``exp(2 pi i (k1 u1 + k2 u2))`` in component ``c`` at node ``i``. The
    reality constraint ``coeff(-k) = conj(coeff(k))`` is enforced.

    Parameters
    ----------
    grid : RadialGrid
    flat : FlatTorusMetric
    coeffs : array_like, complex, shape (6, 2K+1, 2K+1, N)
    d1, d2 : array_like, optional
        Exact radial derivatives of ``coeffs``; finite differences otherwise.
    """

    grid: RadialGrid
    flat: FlatTorusMetric
    coeffs: np.ndarray
    d1: np.ndarray = field(default=None, repr=False)
    d2: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        c = _frozen(self.coeffs, complex)
        if c.ndim != 4 or c.shape[0] != 6 or c.shape[1] != c.shape[2] or c.shape[1] % 2 != 1:
            raise GridError(f"coeffs must have shape (6, 2K+1, 2K+1, N), got {c.shape}")
        if c.shape[3] != self.grid.n:
            raise GridError("coefficient array does not match the radial grid")
        _check_finite(c, self.d1, self.d2)
        mirror = np.conj(c[:, ::-1, ::-1])
        scale = max(np.abs(c).max(), 1e-300)
        if np.abs(c - mirror).max() > 1e-12 * scale:
            raise DataError("Fourier coefficients violate the reality constraint")
        object.__setattr__(self, "coeffs", c)
        for name in ("d1", "d2"):
            arr = getattr(self, name)
            if arr is not None:
                object.__setattr__(self, name, _frozen(arr, complex))

    # construction -------------------------------------------------------
    @classmethod
    def _trusted(cls, grid, flat, coeffs, d1=None, d2=None):
        """Build from freshly computed arrays derived from valid fields (no checks, no copies)."""
        obj = object.__new__(cls)
        for name, arr in (("grid", grid), ("flat", flat), ("coeffs", coeffs), ("d1", d1), ("d2", d2)):
            if isinstance(arr, np.ndarray):
                arr.setflags(write=False)
            object.__setattr__(obj, name, arr)
        return obj

    @classmethod
    def from_radial(cls, h, flat, K=0):
        """Embed a radial field as the k=0 mode of a field with truncation K."""
        n = 2 * K + 1
        shape = (6, n, n, h.grid.n)
        out = [np.zeros(shape, dtype=complex) for _ in range(3)]
        for arr, src in zip(out, (h.values, h.d1, h.d2)):
            arr[:, K, K] = src
        return cls._trusted(h.grid, flat, *out)

    @classmethod
    def symmetrized(cls, grid, flat, coeffs, d1=None, d2=None):
        """Project arbitrary coefficients onto the reality constraint."""
        def sym(a):
            return None if a is None else 0.5 * (a + np.conj(a[:, ::-1, ::-1]))
        return cls(grid, flat, sym(coeffs), sym(d1), sym(d2))

    # basic properties ---------------------------------------------------
    @property
    def K(self):
        return (self.coeffs.shape[1] - 1) // 2

    @property
    def r(self):
        return self.grid.r

    @cached_property
    def _derivs(self):
        if self.d1 is not None and self.d2 is not None:
            return self.d1, self.d2
        d1, d2 = radial_derivatives(self.coeffs, self.grid.dr)
        return (self.d1 if self.d1 is not None else d1,
                self.d2 if self.d2 is not None else d2)

    @property
    def dr1(self):
        return self._derivs[0]

    @property
    def dr2(self):
        return self._derivs[1]

    @cached_property
    def modes(self):
        """Integer modes as array of shape (2K+1, 2K+1, 2)."""
        k = np.arange(-self.K, self.K + 1)
        k1, k2 = np.meshgrid(k, k, indexing="ij")
        return np.stack([k1, k2], axis=-1)

    @cached_property
    def wavevectors(self):
        """Euclidean wavevectors, shape (2K+1, 2K+1, 2)."""
        return self.flat.wavevector(self.modes.reshape(-1, 2)).reshape(self.modes.shape)

    @cached_property
    def eigenvalues(self):
        """Fiber Laplace eigenvalues ``4 pi^2 |k|^2_dual`` per mode."""
        return 4 * np.pi ** 2 * self.flat.dual_norm2(self.modes)

    def is_radial(self):
        return self._radial

    @cached_property
    def _radial(self):
        c, K = self.coeffs, self.K
        return not (np.any(c[:, :K]) or np.any(c[:, K + 1:])
                    or np.any(c[:, K, :K]) or np.any(c[:, K, K + 1:]))

    # arithmetic ---------------------------------------------------------
    def _combine(self, other, a, b):
        _same_grid(self.grid, other.grid)
        if self.K != other.K:
            raise GridError("fields have different Fourier truncations")
        # Differences are linear, so combining stored derivatives is exact.
        return TensorField._trusted(self.grid, self.flat, a * self.coeffs + b * other.coeffs,
                                    a * self.dr1 + b * other.dr1, a * self.dr2 + b * other.dr2)

    def __add__(self, other):
        if isinstance(other, RadialTensorField):
            other = TensorField.from_radial(other, self.flat, self.K)
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other):
        if isinstance(other, RadialTensorField):
            other = TensorField.from_radial(other, self.flat, self.K)
        return self._combine(other, 1.0, -1.0)

    def scaled(self, c):
        if not np.isfinite(c):
            raise ParameterError(f"scale factor must be finite, got {c}")
        return TensorField._trusted(self.grid, self.flat, c * self.coeffs, c * self.dr1,
                                    c * self.dr2)

    def __mul__(self, c):
        return self.scaled(float(c))

    __rmul__ = __mul__

    # averaging and Parseval --------------------------------------------
    def average(self):
        return average(self)

    def trace_coeffs(self):
        """Fourier coefficients of ``tr(h)``, shape (2K+1, 2K+1, N)."""
        return self.coeffs[5] + np.exp(2 * self.r) * (self.coeffs[0] + self.coeffs[2])

    def fiber_mean_square(self):
        """Fiber mean of ``|h|^2`` at every node (exact, by Parseval)."""
        w = frame_weights(self.r)
        return np.einsum("cabn,cn->n", np.abs(self.coeffs) ** 2, w ** 2)

    # fiber sampling -----------------------------------------------------
    def sample_size(self, M=None):
        m = 2 * self.K + 2 if M is None else int(M)
        if m < 2 * self.K + 1:
            raise GridError(f"fiber sample size {m} aliases modes up to K={self.K}")
        return max(m, 1)

    def _to_grid(self, c, M):
        """Evaluate a Hermitian coefficient block (..., 2K+1, 2K+1, n) on an MxM fiber grid.

        Only the half spectrum ``k2 >= 0`` is read; a real inverse FFT
        reconstructs the samples.
        """
        K = self.K
        shape = c.shape[:-3] + (M, M // 2 + 1, c.shape[-1])
        buf = np.zeros(shape, dtype=complex)
        idx = np.arange(-K, K + 1) % M
        buf[..., idx[:, None], np.arange(K + 1)[None, :], :] = c[..., K:, :]
        return sfft.irfft2(buf, s=(M, M), axes=(-3, -2)) * (M * M)

    def iter_samples(self, M=None, orders=2, chunk=CHUNK):
        """Yield ``(slice, norms)`` per radial chunk of sampled derivative norms.

        ``norms`` is a tuple ``(|h|, |Dh|, |D^2h|)`` truncated to ``orders+1``
        entries, each of shape (M, M, n_chunk).
        """
        M = self.sample_size(M)
        for start in range(0, self.grid.n, chunk):
            sl = slice(start, min(start + chunk, self.grid.n))
            yield sl, self.sample_block(sl, M, orders)

    def sample_block(self, sl, M=None, orders=2):
        """Sampled derivative norms on the radial nodes selected by ``sl``."""
        M = self.sample_size(M)
        xi = self.wavevectors
        x1 = xi[..., 0][None, :, :, None]
        x2 = xi[..., 1][None, :, :, None]
        radial = self.is_radial()
        r = self.r[sl]
        w = frame_weights(r)[:, None, None, :]
        e2r = np.exp(2 * r)
        c0 = self.coeffs[..., sl]
        out = []

        def sq(block):
            return np.sum((w * self._to_grid(block, M)) ** 2, axis=0)

        out.append(np.sqrt(sq(c0)))
        if orders >= 1:
            c1 = self.dr1[..., sl]
            s = sq(c1)
            if not radial:
                s = s + e2r * (sq(1j * x1 * c0) + sq(1j * x2 * c0))
            out.append(np.sqrt(s))
        if orders >= 2:
            c2 = self.dr2[..., sl]
            s = sq(c2)
            if not radial:
                s = s + 2 * e2r * (sq(1j * x1 * c1) + sq(1j * x2 * c1))
                s = s + e2r ** 2 * (sq(-x1 * x1 * c0) + 2 * sq(-x1 * x2 * c0) + sq(-x2 * x2 * c0))
            out.append(np.sqrt(s))
        return tuple(out)

    def sampled_norms(self, M=None, orders=2):
        """Full arrays ``(|h|, |Dh|, |D^2h|)`` of shape (M, M, N)."""
        M = self.sample_size(M)
        arrays = [np.empty((M, M, self.grid.n)) for _ in range(orders + 1)]
        for sl, norms in self.iter_samples(M, orders):
            for arr, v in zip(arrays, norms):
                arr[..., sl] = v
        return tuple(arrays)

    def fiber_reduce(self, func, M=None, orders=2):
        """Apply ``func(norms, slice)`` per chunk and stack results along r.

        ``func`` receives the sampled norm tuple and must return an array
        whose last axis is the chunk's radial axis.
        """
        parts = [func(norms, sl) for sl, norms in self.iter_samples(M, orders)]
        return np.concatenate(parts, axis=-1)

    def max_norm(self, M=None):
        """``max_{T(r)} |h|`` per node."""
        return self.fiber_reduce(lambda n, sl: n[0].max(axis=(0, 1)), M, orders=0)

    def max_c1_norm(self, M=None):
        return self.fiber_reduce(lambda n, sl: (n[0] + n[1]).max(axis=(0, 1)), M, orders=1)

    def max_c2_norm(self, M=None):
        return self.fiber_reduce(lambda n, sl: (n[0] + n[1] + n[2]).max(axis=(0, 1)), M, orders=2)

    def sample_values(self, M=None):
        """Component values on the MxM fiber grid, shape (6, M, M, N)."""
        M = self.sample_size(M)
        return self._to_grid(self.coeffs, M)


def average(h):
    """Fiber average of ``h``: the k=0 slice as a radial field.

    A radial input is returned unchanged.
    """
    if isinstance(h, RadialTensorField):
        return h
    K = h.K
    return RadialTensorField(h.grid, h.coeffs[:, K, K].real,
                             h.dr1[:, K, K].real, h.dr2[:, K, K].real)


def embed(h, flat, K=0):
    """Embed a radial field as a TensorField with truncation ``K``."""
    return TensorField.from_radial(h, flat, K)


def as_tensor_field(h, flat=None, K=0):
    """Return ``h`` as a TensorField (radial inputs need ``flat``)."""
    if isinstance(h, TensorField):
        return h
    if flat is None:
        flat = FlatTorusMetric.square()
    return TensorField.from_radial(h, flat, K)


def check_averaging_properties(h, M=None):
    """Measured constants for the averaging properties.

    Returns a dict with

    * ``ii``: smallest ``c`` with ``|h_hat|(r) <= c max_{T(r)} |h|``;
    * ``iii``: max deviation between the radial derivative of ``h_hat`` and
      the average of the radial derivative of ``h`` (same discretization);
    * ``iv``: max deviation between ``tr(h_hat)`` and the average of
      ``tr(h)`` (computed in Fourier);
    * ``v``: smallest ``c`` with
      ``|h - h_hat|(x) <= c D e^{-r} max_{T(r)} |h|_C1``, ``D = diam(flat)``.
    """
    if isinstance(h, RadialTensorField):
        h = TensorField.from_radial(h, FlatTorusMetric.square())
    _check_finite(h.coeffs)
    hat = average(h)
    K = h.K
    hat_norm = hat.norm()
    hmax = h.max_norm(M)
    ii = _ratio_max(hat_norm, hmax)

    fd1, fd2 = radial_derivatives(hat.values, h.grid.dr)
    avg1, avg2 = radial_derivatives(h.coeffs[:, K, K], h.grid.dr)
    iii = float(max(np.abs(fd1 - avg1.real).max(), np.abs(fd2 - avg2.real).max()))

    tr_avg = h.trace_coeffs()[K, K].real
    iv = float(np.abs(hat.trace() - tr_avg).max())

    dev = h - TensorField.from_radial(hat, h.flat, K)
    dev_max = dev.max_norm(M)
    c1max = h.max_c1_norm(M)
    denom = h.flat.diameter * np.exp(-h.r) * c1max
    v = _ratio_max(dev_max, denom)
    return {"ii": ii, "iii": iii, "iv": iv, "v": v}


def _ratio_max(num, den, floor=1e-300):
    """Largest ``num/den`` over nodes; 0 where ``num`` vanishes."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    active = num > floor
    if not np.any(active):
        return 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(active, num / np.where(den > 0, den, 0.0), 0.0)
    q = np.where(active & ~(den > 0), np.inf, q)
    return float(q.max())
