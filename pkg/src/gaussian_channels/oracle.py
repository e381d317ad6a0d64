"""Quadrature ground truth for kernel conversions.

States are sampled in the position representation ``rho(x, r)`` on a grid,
pushed through a kernel by direct trapezoidal quadrature over the input
coordinates, and their moments are read back from ``rho(0, r)`` and its
``x``-derivatives. Nothing here uses the closed-form affine tuples; they
only enter :func:`oracle_compare` as the thing being checked.

Trapezoidal sums of smooth Gaussian integrands converge spectrally, so the
quadrature steps are chosen from bandwidth bounds of the integrand rather
than by refinement.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import convert
from .core import AffineChannel, GaussianState, apply
from .kernels import (
    FormI,
    FormII,
    GaussianForm,
    InvalidDomain,
    KernelSpec,
    normalization,
    sigma_exponent,
    validate_tp,
)

#: Half-width of every window in standard deviations of its Gaussian envelope.
NSIG = 8.5
#: Bandwidth margin: step ``h = 2 pi / (K + BANDWIDTH * sqrt(c))``.
BANDWIDTH = 13.0
MIN_QUAD = 65

# 9-point central stencils (8th order) for the first and second derivative
_D1 = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])
_D2 = np.array(
    [-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560]
)


class NotNormalized(ValueError):
    """A density grid failed the trace or hermiticity precondition."""


class UnsupportedDelta(ValueError):
    """The kernel's delta structure cannot be represented on a grid."""


@dataclass(frozen=True)
class PositionGrid:
    """Square grid of ``n`` points per axis on ``[-L, L]``.

    ``r_extent`` defaults to ``extent``; separate extents keep squeezed
    states resolved along both axes.
    """

    n: int
    extent: float
    r_extent: float | None = None

    def __post_init__(self):
        if self.n < 3 or self.n % 2 == 0:
            raise ValueError("n must be odd and >= 3")
        object.__setattr__(self, "extent", float(self.extent))
        if not self.extent > 0:
            raise ValueError("extent must be > 0")
        if self.r_extent is None:
            object.__setattr__(self, "r_extent", float(self.extent))
        else:
            object.__setattr__(self, "r_extent", float(self.r_extent))
        if not self.r_extent > 0:
            raise ValueError("r_extent must be > 0")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.extent, self.extent, self.n)

    @property
    def r(self) -> np.ndarray:
        return np.linspace(-self.r_extent, self.r_extent, self.n)

    @property
    def hx(self) -> float:
        return 2 * self.extent / (self.n - 1)

    @property
    def hr(self) -> float:
        return 2 * self.r_extent / (self.n - 1)

    @property
    def spacing(self) -> float:
        return self.hx

    def refined(self) -> PositionGrid:
        """Same extents, half the spacing."""
        return PositionGrid(2 * self.n - 1, self.extent, self.r_extent)


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Samples ``values[j, k] = rho(x_j, r_k)``."""

    grid: PositionGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.n, self.grid.n):
            raise ValueError(f"values must have shape {(self.grid.n,) * 2}")
        object.__setattr__(self, "values", v)

    def trace(self) -> float:
        return float(np.real(_trapz(self.values[self.grid.n // 2], self.grid.hr)))

    def hermiticity_defect(self) -> float:
        v = self.values
        scale = max(np.abs(v).max(), 1e-300)
        return float(np.abs(v[::-1] - v.conj()).max() / scale)

    def to_binary(self, path) -> None:
        """Header ``n`` (int64), ``x`` and ``r`` extents (float64), then row-major complex128."""
        with open(path, "wb") as fh:
            fh.write(struct.pack("<qdd", self.grid.n, self.grid.extent, self.grid.r_extent))
            fh.write(np.ascontiguousarray(self.values, dtype="<c16").tobytes())

    @classmethod
    def from_binary(cls, path) -> DensityGrid:
        raw = Path(path).read_bytes()
        n, lx, lr = struct.unpack_from("<qdd", raw)
        vals = np.frombuffer(raw, dtype="<c16", offset=24).reshape(n, n)
        return cls(PositionGrid(int(n), lx, lr), vals.copy())


def _trapz(f, h, axis=-1):
    f = np.moveaxis(np.asarray(f), axis, -1)
    return h * (f.sum(axis=-1) - 0.5 * (f[..., 0] + f[..., -1]))


def _conditional(s: GaussianState):
    sig = s.sigma
    s2 = sig[1, 1] - sig[0, 1] ** 2 / sig[0, 0]
    if sig[0, 0] <= 0 or s2 <= 0:
        raise InvalidDomain("state needs sigma11 > 0 and a positive conditional p-variance")
    return sig[0, 0], s2, sig[0, 1] / sig[0, 0]


def state_to_position(s: GaussianState, x, r):
    """Closed-form ``rho(x, r)`` of a Gaussian state."""
    v11, s2, slope = _conditional(s)
    q0, p0 = s.mean
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    mu = p0 + slope * (r - q0)
    return np.exp(-((r - q0) ** 2) / (2 * v11) - 0.5 * s2 * x * x - 1j * mu * x) / math.sqrt(
        2 * math.pi * v11
    )


def sample_state(s: GaussianState, g: PositionGrid) -> DensityGrid:
    return DensityGrid(g, state_to_position(s, g.x[:, None], g.r[None, :]))


def grid_for_state(
    s: GaussianState, n: int = 401, nsig: float = NSIG, phase_step: float = 0.1
) -> PositionGrid:
    """Grid covering ``nsig`` widths of ``s`` in ``r``.

    The ``x`` extent is ``nsig`` coherence lengths, capped so that the
    ``x`` spacing times the largest local momentum stays below
    ``phase_step``; moment extraction only differentiates at ``x = 0``.
    """
    v11, s2, slope = _conditional(s)
    r_extent = abs(s.mean[0]) + nsig * math.sqrt(v11)
    k_max = abs(s.mean[1]) + abs(slope) * (r_extent + abs(s.mean[0])) + math.sqrt(s2)
    x_extent = min(nsig / math.sqrt(s2), 0.5 * (n - 1) * phase_step / k_max)
    return PositionGrid(n, x_extent, r_extent)


def _nodes(lo: float, hi: float, h: float, minimum: int = MIN_QUAD):
    m = max(int(math.ceil((hi - lo) / h)) + 1, minimum)
    m += (m + 1) % 2
    pts = np.linspace(lo, hi, m)
    step = pts[1] - pts[0]
    w = np.full(m, step)
    w[0] = w[-1] = 0.5 * step
    return pts, w


def _step(freq: float, curvature: float) -> float:
    return 2 * math.pi / (freq + BANDWIDTH * math.sqrt(max(curvature, 1e-300)))


def _propagate_gaussian(k: GaussianForm, s: GaussianState, g: PositionGrid, quad_n):
    c = k.coeffs
    v11, s2, slope = _conditional(s)
    q0, p0 = s.mean
    xf, rf = g.x, g.r
    Xf, Rf = g.extent, g.r_extent

    # x_i envelope: |rho_i| <= exp(-s2 x^2 / 2) times the kernel modulus
    cx = 0.5 * s2 + c.a3
    if cx <= 0:
        raise InvalidDomain("x_i integrand is not bounded (a3 + s^2/2 <= 0)")
    shift = abs(c.a2) * Xf / (2 * cx)
    Xi = shift + NSIG / math.sqrt(2 * cx)
    Ri_lo, Ri_hi = q0 - NSIG * math.sqrt(v11), q0 + NSIG * math.sqrt(v11)
    Ri = max(abs(Ri_lo), abs(Ri_hi))

    kr = abs(c.b2) * Xf + abs(c.b4) * Xi + abs(slope) * Xi
    hr = _step(kr, 1 / (2 * v11))
    kx = abs(c.b3) * Rf + abs(c.c2) + abs(p0) + abs(slope) * (Ri + abs(q0)) + abs(c.b4) * Ri
    cF = 0.5 * (c.b4**2 * v11 + 2 * abs(c.b4 * s.sigma[0, 1]) + s.sigma[1, 1])
    hx = _step(kx, abs(c.a3) + cF + 0.5 * s2)
    if quad_n:
        hr, hx = (Ri_hi - Ri_lo) / (quad_n - 1), 2 * Xi / (quad_n - 1)
    ri, wr = _nodes(Ri_lo, Ri_hi, hr)
    xi, wx = _nodes(-Xi, Xi, hx)

    # F[x_i, x_f] = sum_ri w exp(i (b2 x_f + b4 x_i) r_i) rho_i(x_i, r_i)
    rho_i = state_to_position(s, xi[:, None], ri[None, :])
    Q = (rho_i * wr) * np.exp(1j * c.b4 * xi[:, None] * ri[None, :])
    P = np.exp(1j * c.b2 * ri[:, None] * xf[None, :])
    F = Q @ P
    # remaining x_i-dependent factors of exp(Sigma) at r_f = r_i = 0
    G = wx[:, None] * F * np.exp(
        1j * c.c2 * xi[:, None] - c.a2 * xf[None, :] * xi[:, None] - c.a3 * xi[:, None] ** 2
    )
    R = np.exp(1j * c.b3 * xi[:, None] * rf[None, :])
    inner = G.T @ R
    outer = np.exp(sigma_exponent(c, xf[:, None], rf[None, :], 0.0, 0.0))
    return normalization(k) * outer * inner


def _propagate_form1(k: FormI, s: GaussianState, g: PositionGrid, quad_n):
    c = k.coeffs
    A = k.ratio
    v11, s2, slope = _conditional(s)
    q0, _ = s.mean
    xf, rf = g.x, g.r
    Xf = g.extent

    smooth = c.replace(e1=0.0, e2=0.0, e3=0.0)
    Ri_lo, Ri_hi = q0 - NSIG * math.sqrt(v11), q0 + NSIG * math.sqrt(v11)
    kr = (abs(c.b2) + abs(c.b4 * A) + abs(slope * A)) * Xf
    hr = _step(kr, abs(c.e3) + 1 / (2 * v11))
    if quad_n:
        hr = (Ri_hi - Ri_lo) / (quad_n - 1)
    ri, wr = _nodes(Ri_lo, Ri_hi, hr)

    xif = A * xf
    Q = sigma_exponent(smooth, xf[:, None], 0.0, xif[:, None], ri[None, :]) - sigma_exponent(
        smooth, xf[:, None], 0.0, xif[:, None], 0.0
    )
    H = wr * np.exp(Q) * state_to_position(s, xif[:, None], ri[None, :])
    K = np.exp(-(c.e1 * rf[None, :] ** 2 + c.e2 * ri[:, None] * rf[None, :] + c.e3 * ri[:, None] ** 2))
    P = sigma_exponent(smooth, xf[:, None], rf[None, :], xif[:, None], 0.0)
    return normalization(k) / abs(k.beta) * np.exp(P) * (H @ K)


def _propagate_form2(k: FormII, s: GaussianState, g: PositionGrid):
    if k.eta == 0:
        raise UnsupportedDelta("eta = 0 concentrates the output on r_f = 0")
    A = k.ratio
    B = k.gamma / k.eta
    xf, rf = g.x[:, None], g.r[None, :]
    xi, ri = A * xf, B * rf
    jac = 1.0 / abs(k.beta * k.eta)
    return (
        normalization(k)
        * jac
        * np.exp(sigma_exponent(k.coeffs, xf, rf, xi, ri))
        * state_to_position(s, xi, ri)
    )


def propagate(
    k: KernelSpec,
    s: GaussianState,
    g: PositionGrid,
    quad_n: int | None = None,
    check_tp: bool = True,
) -> DensityGrid:
    """Output ``rho_f`` on ``g`` of the kernel acting on the Gaussian state ``s``.

    ``quad_n`` fixes the number of quadrature nodes per input axis
    (otherwise chosen from bandwidth bounds).
    """
    if check_tp:
        rep = validate_tp(k)
        if not rep.passed:
            raise InvalidDomain(f"kernel is not trace preserving: {rep.violations}")
    with np.errstate(over="raise", invalid="raise"):
        if isinstance(k, GaussianForm):
            vals = _propagate_gaussian(k, s, g, quad_n)
        elif isinstance(k, FormI):
            vals = _propagate_form1(k, s, g, quad_n)
        elif isinstance(k, FormII):
            vals = _propagate_form2(k, s, g)
        else:
            raise TypeError(f"not a kernel: {k!r}")
    return DensityGrid(g, vals)


def _x_derivatives(d: DensityGrid, decay: float = 1e-13):
    """First and second ``x``-derivatives at ``x = 0`` for every ``r``.

    Spectral when ``rho`` has decayed at both ``x`` edges, 9-point stencils otherwise.
    """
    g, v = d.grid, d.values
    edge = max(np.abs(v[0]).max(), np.abs(v[-1]).max())
    if edge <= decay * np.abs(v).max():
        k = 2 * np.pi * np.fft.fftfreq(g.n, g.hx)
        spec = np.fft.fft(np.fft.ifftshift(v, axes=0), axis=0)
        return (1j * k) @ spec / g.n, -(k * k) @ spec / g.n
    c = g.n // 2
    rows = v[c - 4 : c + 5]
    return (
        np.tensordot(_D1, rows, axes=(0, 0)) / g.hx,
        np.tensordot(_D2, rows, axes=(0, 0)) / g.hx**2,
    )


def extract_moments(
    d: DensityGrid, trace_tol: float = 1e-6, herm_tol: float = 1e-6
) -> GaussianState:
    """First and second moments read from ``rho(0, r)`` and ``x``-derivatives at 0."""
    g = d.grid
    if g.n < 9:
        raise ValueError("moment extraction needs n >= 9")
    herm = d.hermiticity_defect()
    if not herm <= herm_tol:
        raise NotNormalized(f"hermiticity defect {herm:.3e} exceeds {herm_tol:.1e}")
    tr = d.trace()
    if not abs(tr - 1) <= trace_tol:
        raise NotNormalized(f"trace {tr:.9f} differs from 1 by more than {trace_tol:.1e}")
    c = g.n // 2
    rho0 = d.values[c]
    drho, d2rho = _x_derivatives(d)
    r, h = g.r, g.hr
    q = np.real(_trapz(r * rho0, h)) / tr
    q2 = np.real(_trapz(r * r * rho0, h)) / tr
    p = np.real(_trapz(1j * drho, h)) / tr
    p2 = np.real(_trapz(-d2rho, h)) / tr
    qp = np.real(_trapz(r * 1j * drho, h)) / tr
    cov = qp - q * p
    return GaussianState([[q2 - q * q, cov], [cov, p2 - p * p]], [q, p])


def _rescale(d: DensityGrid) -> tuple[float, float]:
    """Per-axis extent factors: grow when mass reaches an edge, shrink when unresolved."""
    v = np.abs(d.values)
    peak = v.max()
    if not np.isfinite(peak) or peak == 0:
        return 2.0, 2.0
    ix, ir = np.unravel_index(np.argmax(v), v.shape)
    factors = []
    for line in (v[:, ir], v[d.grid.n // 2]):
        if max(line[0], line[-1]) > 1e-6 * peak:
            factors.append(2.0)
        elif np.count_nonzero(line > 1e-3 * peak) < 15:
            factors.append(0.25)
        else:
            factors.append(1.0)
    return factors[0], factors[1]


def _pilot_grid(k: KernelSpec, s: GaussianState, n: int, nsig: float) -> PositionGrid:
    """Fit the output window by repeated coarse propagation."""
    g = grid_for_state(s, 101)
    scale = 1.0 + max(abs(v) for v in k.coeffs.values())
    g = PositionGrid(101, g.extent * scale, (g.r_extent + scale) * scale)
    out = None
    for _ in range(16):
        try:
            d = propagate(k, s, g)
        except FloatingPointError:
            g = PositionGrid(101, 2 * g.extent, 2 * g.r_extent)
            continue
        try:
            out = extract_moments(d, trace_tol=1e-3, herm_tol=1e-3)
        except NotNormalized:
            fx, fr = _rescale(d)
            if fx == fr == 1.0:
                raise
            g = PositionGrid(101, fx * g.extent, fr * g.r_extent)
            continue
        new = grid_for_state(out, 101)
        if abs(new.extent / g.extent - 1) < 0.05 and abs(new.r_extent / g.r_extent - 1) < 0.05:
            break
        g = new
    if out is None:
        raise NotNormalized("pilot propagation never produced a normalised output")
    final = grid_for_state(out, n, nsig)
    return PositionGrid(n, final.extent, final.r_extent * 1.02)


def adaptive_grid(
    k: KernelSpec, s: GaussianState, n: int = 401, nsig: float = NSIG
) -> PositionGrid:
    """Output grid covering ``nsig`` widths of ``rho_f``, found without the affine route."""
    return _pilot_grid(k, s, n, nsig)


@dataclass
class OracleReport:
    observed: GaussianState
    predicted: GaussianState
    sigma_deviation: float
    mean_deviation: float
    mean_deviation_as_printed: float
    mean_deviation_flipped: float
    grid: PositionGrid
    trace: float
    hermiticity_defect: float

    @property
    def max_deviation(self) -> float:
        return max(self.sigma_deviation, self.mean_deviation)

    def to_dict(self) -> dict:
        return {
            "observed": {"sigma": self.observed.sigma.tolist(), "mean": self.observed.mean.tolist()},
            "predicted": {
                "sigma": self.predicted.sigma.tolist(),
                "mean": self.predicted.mean.tolist(),
            },
            "sigma_deviation": self.sigma_deviation,
            "mean_deviation": self.mean_deviation,
            "mean_deviation_as_printed": self.mean_deviation_as_printed,
            "mean_deviation_flipped": self.mean_deviation_flipped,
            "sign_convention": convert.SIGN_CONVENTION.value,
            "grid": {"n": self.grid.n, "x_extent": self.grid.extent, "r_extent": self.grid.r_extent},
            "trace": self.trace,
            "hermiticity_defect": self.hermiticity_defect,
        }


def oracle_compare(
    k: KernelSpec, s: GaussianState, g: PositionGrid | None = None
) -> OracleReport:
    g = g or adaptive_grid(k, s)
    rho = propagate(k, s, g)
    observed = extract_moments(rho)
    predicted = apply(convert.to_affine(k), s)
    printed = apply(convert.to_affine(k, convert.SignConvention.AS_PRINTED), s)
    flipped = apply(convert.to_affine(k, convert.SignConvention.GLOBAL_FLIP), s)
    dev = lambda a, b: float(np.abs(a - b).max())  # noqa: E731
    return OracleReport(
        observed=observed,
        predicted=predicted,
        sigma_deviation=dev(observed.sigma, predicted.sigma),
        mean_deviation=dev(observed.mean, predicted.mean),
        mean_deviation_as_printed=dev(observed.mean, printed.mean),
        mean_deviation_flipped=dev(observed.mean, flipped.mean),
        grid=g,
        trace=rho.trace(),
        hermiticity_defect=rho.hermiticity_defect(),
    )


def audit_sign_convention(
    k: KernelSpec, s: GaussianState, g: PositionGrid | None = None
) -> convert.SignConvention:
    """Run the quadrature oracle on a displaced state and call :func:`convert.sign_audit`."""
    g = g or adaptive_grid(k, s)
    observed = extract_moments(propagate(k, s, g))
    printed = apply(convert.to_affine(k, convert.SignConvention.AS_PRINTED), s)
    return convert.sign_audit(k, observed, printed)


def affine_of(k: KernelSpec) -> AffineChannel:
    return convert.to_affine(k)
