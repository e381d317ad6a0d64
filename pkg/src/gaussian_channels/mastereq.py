"""Time-local generators for time-parametrised delta-form kernels.

A family ``J(t)`` solves ``d rho / dt = L(t) rho`` with

    L = Lc + (dx, dr) X (dx, dr)^T + (x, r) Y (dx, dr)^T + (x, r) Z (x, r)^T

exactly when the linear coefficient ``c(t) = c1 + A c2`` stays proportional
to ``A(t)``. The coefficient sets below are written through

    lam1 = b1 + A b3,   lam2 = b2 + A b4,   lam3 = a1 + A a2 + A^2 a3,
    lam  = lam1 + B lam2

with ``A = alpha/beta`` and ``B = gamma/eta``. Time derivatives of sampled
coefficients use second-order central differences, one-sided at the ends.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import oracle
from .core import GaussianState
from .convert import to_affine
from .kernels import FormI, FormII, GaussianForm, InvalidDomain, SigmaCoefficients, validate_tp


class GridTooCoarse(UserWarning):
    """The density grid under-resolves the state it carries."""


class NoMasterEquation(InvalidDomain):
    """The trajectory fails the existence condition ``c(t) ~ A(t)``."""


@dataclass(frozen=True, eq=False)
class CoefficientTrajectory:
    """Kernels of one form sampled on a uniform time grid."""

    times: np.ndarray
    kernels: tuple

    def __init__(self, times, kernels, check_tp: bool = True):
        times = np.array(times, dtype=float)
        kernels = tuple(kernels)
        if times.ndim != 1 or len(times) < 2:
            raise ValueError("need at least two sample times")
        if len(kernels) != len(times):
            raise ValueError("one kernel per sample time")
        steps = np.diff(times)
        if not np.all(steps > 0):
            raise ValueError("times must be strictly increasing")
        if np.abs(steps - steps.mean()).max() > 1e-9 * max(abs(steps.mean()), 1e-300) + 1e-15:
            raise ValueError("time step must be uniform")
        kind = type(kernels[0])
        if not all(type(k) is kind for k in kernels):
            raise ValueError("all samples must share one kernel form")
        if check_tp:
            for t, k in zip(times, kernels):
                rep = validate_tp(k)
                if not rep.passed:
                    raise InvalidDomain(f"sample at t={t:g} is not TP: {rep.violations}")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "kernels", kernels)

    @classmethod
    def from_function(cls, times, factory, check_tp: bool = True) -> CoefficientTrajectory:
        """Sample ``factory(t) -> KernelSpec`` at each time."""
        return cls(times, [factory(float(t)) for t in times], check_tp=check_tp)

    @property
    def form(self) -> type:
        return type(self.kernels[0])

    @property
    def dt(self) -> float:
        return float((self.times[-1] - self.times[0]) / (len(self.times) - 1))

    def __len__(self):
        return len(self.times)

    def column(self, name: str) -> np.ndarray:
        """Coefficient or delta parameter ``name`` across all samples."""
        if name in _DELTA_NAMES:
            return np.array([getattr(k, name) for k in self.kernels], dtype=float)
        return np.array([getattr(k.coeffs, name) for k in self.kernels], dtype=float)

    @property
    def A(self) -> np.ndarray:
        if self.form is GaussianForm:
            raise InvalidDomain("GaussianForm has no delta ratio")
        return np.array([k.alpha / k.beta for k in self.kernels])

    @property
    def B(self) -> np.ndarray:
        if self.form is not FormII:
            raise InvalidDomain("B is defined for FormII only")
        out = []
        for k in self.kernels:
            if k.eta == 0:
                raise InvalidDomain("eta = 0: B = gamma/eta undefined")
            out.append(k.gamma / k.eta)
        return np.array(out)

    @property
    def c(self) -> np.ndarray:
        return self.column("c1") + self.A * self.column("c2")

    def index(self, t: float) -> int:
        i = int(round((t - self.times[0]) / self.dt))
        if not 0 <= i < len(self.times) or abs(self.times[i] - t) > 1e-6 * self.dt:
            raise ValueError(f"t={t} is not a sample time")
        return i


_DELTA_NAMES = {"alpha", "beta", "gamma", "eta"}


@dataclass(frozen=True, eq=False)
class Liouvillian:
    Lc: complex = 0.0
    X: np.ndarray = field(default_factory=lambda: np.zeros((2, 2), complex))
    Y: np.ndarray = field(default_factory=lambda: np.zeros((2, 2), complex))
    Z: np.ndarray = field(default_factory=lambda: np.zeros((2, 2), complex))

    def __post_init__(self):
        object.__setattr__(self, "Lc", complex(self.Lc))
        for name in "XYZ":
            m = np.array(getattr(self, name), dtype=complex)
            if m.shape != (2, 2):
                raise ValueError(f"{name} must be 2x2")
            if name != "Y" and abs(m[0, 1] - m[1, 0]) > 1e-12 * max(1.0, np.abs(m).max()):
                raise ValueError(f"{name} must be symmetric")
            object.__setattr__(self, name, m)

    @classmethod
    def from_coefficients(cls, **kw) -> Liouvillian:
        """Build from named entries ``Lc, Xxx, Xxr, Xrr, Yxx, Yxr, Yrx, Yrr, Zxx, Zxr, Zrr``."""
        g = lambda n: kw.get(n, 0.0)  # noqa: E731
        return cls(
            g("Lc"),
            [[g("Xxx"), g("Xxr")], [g("Xxr"), g("Xrr")]],
            [[g("Yxx"), g("Yxr")], [g("Yrx"), g("Yrr")]],
            [[g("Zxx"), g("Zxr")], [g("Zxr"), g("Zrr")]],
        )

    def coefficients(self) -> dict[str, complex]:
        X, Y, Z = self.X, self.Y, self.Z
        return {
            "Lc": self.Lc,
            "Xxx": X[0, 0], "Xxr": X[0, 1], "Xrr": X[1, 1],
            "Yxx": Y[0, 0], "Yxr": Y[0, 1], "Yrx": Y[1, 0], "Yrr": Y[1, 1],
            "Zxx": Z[0, 0], "Zxr": Z[0, 1], "Zrr": Z[1, 1],
        }

    def to_dict(self) -> dict:
        return {k: [v.real, v.imag] for k, v in self.coefficients().items()}


@dataclass(frozen=True)
class QbmParams:
    """Stylised damped-oscillator family: damping rate, frequency, amplitude."""

    damping: float
    frequency: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.damping > 0:
            raise ValueError("damping must be > 0")
        if self.frequency == 0:
            raise ValueError("frequency must be nonzero")


def existence_check(traj: CoefficientTrajectory, tol: float = 1e-9) -> bool:
    """True iff ``c(t)/A(t)`` is constant to ``tol * (1 + |median|)``."""
    A = traj.A
    if np.any(A == 0):
        raise InvalidDomain("A(t) = 0 on the grid; the proportionality test degenerates")
    ratio = traj.c / A
    med = float(np.median(ratio))
    return bool(np.abs(ratio - med).max() <= tol * (1 + abs(med)))


def _deriv(y: np.ndarray, dt: float) -> np.ndarray:
    return np.gradient(y, dt, edge_order=2)


def _lambdas(traj: CoefficientTrajectory):
    col = traj.column
    A = traj.A
    lam1 = col("b1") + A * col("b3")
    lam2 = col("b2") + A * col("b4")
    lam3 = col("a1") + A * col("a2") + A * A * col("a3")
    return A, lam1, lam2, lam3


def _require(traj, require_existence, form):
    if traj.form is not form:
        raise TypeError(f"expected a {form.__name__} trajectory, got {traj.form.__name__}")
    if require_existence and not existence_check(traj):
        raise NoMasterEquation("c(t) is not proportional to A(t)")


def liouvillian_form1(
    traj: CoefficientTrajectory, t: float, require_existence: bool = True
) -> Liouvillian:
    _require(traj, require_existence, FormI)
    i = traj.index(t)
    dt = traj.dt
    e1, e2 = traj.column("e1"), traj.column("e2")
    A, l1, l2, l3 = _lambdas(traj)
    for name, arr in (("e1", e1), ("e2", e2), ("A", A)):
        if arr[i] == 0:
            raise InvalidDomain(f"{name}(t) = 0: the channel is singular and has no generator")
    de1, de2, dA, dl1, dl2, dl3 = (_deriv(y, dt)[i] for y in (e1, e2, A, l1, l2, l3))
    e1, e2, A, l1, l2, l3 = e1[i], e2[i], A[i], l1[i], l2[i], l3[i]
    gA = dA / A
    lc = de1 / e1 - de2 / e2
    return Liouvillian.from_coefficients(
        Lc=lc,
        Yrr=lc,
        Yxx=gA,
        Xrr=de1 / (4 * e1**2) - de2 / (2 * e1 * e2),
        Yxr=1j * (l1 * de2 / (e1 * e2) + l2 * dA / (e2 * A) - l1 * de1 / (2 * e1**2) - dl2 / e2),
        Zxx=(
            0.5 * l1**2 * (de2 / (e1 * e2) - de1 / (2 * e1**2))
            + l1 / e2 * (l2 * gA - dl2)
            + 2 * l3 * gA
            - dl3
        ),
        Zxr=1j * (
            gA * (e1 * l2 / e2 - l1 / 2)
            + dl1 / 2
            - dl2 * e1 / e2
            + l1 / 2 * (de2 / e2 - de1 / e1)
        ),
    )


def liouvillian_form2(
    traj: CoefficientTrajectory, t: float, require_existence: bool = True
) -> Liouvillian:
    _require(traj, require_existence, FormII)
    i = traj.index(t)
    dt = traj.dt
    A, l1, l2, _ = _lambdas(traj)
    B = traj.B
    if A[i] == 0 or B[i] == 0:
        raise InvalidDomain("A(t) or B(t) = 0: the channel is singular and has no generator")
    lam = l1 + B * l2
    a1, a2, a3 = traj.column("a1"), traj.column("a2"), traj.column("a3")
    dA, dB, dlam, da1, da2, da3 = (_deriv(y, dt)[i] for y in (A, B, lam, a1, a2, a3))
    A, B, lam, a1, a2 = A[i], B[i], lam[i], a1[i], a2[i]
    gA, gB = dA / A, dB / B
    return Liouvillian.from_coefficients(
        # trace preservation forces Lc = Yrr
        Lc=gB,
        Yxx=gA,
        Yrr=gB,
        Zxx=a2 * dA + 2 * a1 * gA - da1 - A * da2 - A * A * da3,
        Zxr=1j * (dlam / 2 - lam / 2 * (gA + gB)),
    )


def liouvillian(traj: CoefficientTrajectory, t: float, require_existence: bool = True):
    if traj.form is FormI:
        return liouvillian_form1(traj, t, require_existence)
    if traj.form is FormII:
        return liouvillian_form2(traj, t, require_existence)
    raise InvalidDomain("generators are defined for FormI and FormII trajectories")


def _d1(f, h, axis):
    return np.gradient(f, h, axis=axis, edge_order=2)


def _d2(f, h, axis):
    f = np.moveaxis(f, axis, 0)
    out = np.empty_like(f)
    out[1:-1] = f[2:] - 2 * f[1:-1] + f[:-2]
    out[0] = 2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]
    out[-1] = 2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]
    return np.moveaxis(out, 0, axis) / h**2


def _resolution_check(rho: np.ndarray, max_jump: float = 0.5) -> None:
    scale = np.abs(rho).max()
    if scale == 0:
        return
    jump = max(np.abs(np.diff(rho, axis=0)).max(), np.abs(np.diff(rho, axis=1)).max())
    if jump > max_jump * scale:
        warnings.warn(
            f"neighbouring samples differ by {jump / scale:.2f} of max|rho|; grid too coarse",
            GridTooCoarse,
            stacklevel=3,
        )


def apply_liouvillian(L: Liouvillian, d: oracle.DensityGrid) -> oracle.DensityGrid:
    """``L rho`` on the grid with second-order finite differences."""
    g = d.grid
    if g.n < 5:
        raise ValueError("need n >= 5 for one-sided second differences")
    rho = d.values
    _resolution_check(rho)
    x, r = g.x[:, None], g.r[None, :]
    hx, hr = g.hx, g.hr
    X, Y, Z = L.X, L.Y, L.Z
    out = L.Lc * rho + (Z[0, 0] * x * x + 2 * Z[0, 1] * x * r + Z[1, 1] * r * r) * rho
    if np.any(X != 0) or np.any(Y[:, 0] != 0) or np.any(Y[:, 1] != 0):
        dx = _d1(rho, hx, 0)
        dr = _d1(rho, hr, 1)
        out = out + (Y[0, 0] * x + Y[1, 0] * r) * dx + (Y[0, 1] * x + Y[1, 1] * r) * dr
        if X[0, 0] != 0:
            out = out + X[0, 0] * _d2(rho, hx, 0)
        if X[1, 1] != 0:
            out = out + X[1, 1] * _d2(rho, hr, 1)
        if X[0, 1] != 0:
            out = out + 2 * X[0, 1] * _d1(dr, hx, 0)
    return oracle.DensityGrid(g, out)


@dataclass
class MasterEqReport:
    t: float
    dt: float
    residual: float
    tol: float
    lhs_norm: float
    rhs_norm: float
    grid: oracle.PositionGrid
    existence: bool

    @property
    def passed(self) -> bool:
        return self.residual <= self.tol

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "dt": self.dt,
            "residual": self.residual,
            "tol": self.tol,
            "passed": self.passed,
            "lhs_norm": self.lhs_norm,
            "rhs_norm": self.rhs_norm,
            "existence": self.existence,
            "grid": {"n": self.grid.n, "x_extent": self.grid.extent, "r_extent": self.grid.r_extent},
        }


def verify_master_equation(
    traj: CoefficientTrajectory,
    s: GaussianState,
    t: float,
    grid: oracle.PositionGrid | None = None,
    tol: float = 1e-3,
    require_existence: bool = True,
    n: int = 301,
    nsig: float = 6.0,
    generator: Liouvillian | None = None,
) -> MasterEqReport:
    """Compare the centred ``d rho/dt`` from the oracle with ``L(t) rho(t)``.

    The residual is ``max|d rho/dt - L rho| / max(max|d rho/dt|, max|L rho|)``,
    falling back to ``max|rho(t)|`` as the scale when both sides vanish.
    The default grid spans ``nsig`` output widths; beyond 6 the truncated
    tail is below 1e-7 of the peak while the stencil error keeps growing.
    ``generator`` replaces the generator built from the trajectory.
    """
    exists = existence_check(traj)
    L = generator if generator is not None else liouvillian(traj, t, require_existence)
    i = traj.index(t)
    if not 0 < i < len(traj) - 1:
        raise ValueError("t must be an interior sample time")
    grid = grid or oracle.adaptive_grid(traj.kernels[i], s, n, nsig)
    prev, now, nxt = (oracle.propagate(traj.kernels[j], s, grid) for j in (i - 1, i, i + 1))
    lhs = (nxt.values - prev.values) / (2 * traj.dt)
    rhs = apply_liouvillian(L, now).values
    lhs_norm, rhs_norm = float(np.abs(lhs).max()), float(np.abs(rhs).max())
    scale = max(lhs_norm, rhs_norm)
    rho_norm = float(np.abs(now.values).max())
    if scale < 1e-12 * rho_norm:
        scale = rho_norm
    residual = float(np.abs(lhs - rhs).max() / scale) if scale > 0 else 0.0
    return MasterEqReport(float(t), traj.dt, residual, tol, lhs_norm, rhs_norm, grid, exists)


#: Coefficients held fixed in :func:`qbm_trajectory`; ``b1 = b4 = 0`` keeps
#: ``det T = b2/b3`` free of cancellation.
QBM_CONSTANTS = {"a1": 0.5, "a2": 0.0, "a3": 0.5, "b1": 0.0, "b4": 0.0, "c1": 0.0, "c2": 0.0}


def qbm_trajectory(p: QbmParams, duration: float, samples: int) -> CoefficientTrajectory:
    """Synthetic GaussianForm family with ``b2 ~ exp(-damping t/2) sin(frequency t)``.

    ``b3 = exp(damping t/2) sin(frequency t) / frequency^2`` makes
    ``det T = b2/b3 = amplitude frequency^2 exp(-damping t)``. Samples sit at
    ``t_k = (k + 1) duration / samples``; ``t = 0`` is skipped because
    ``b3`` vanishes there.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    if not duration > 0:
        raise ValueError("duration must be > 0")
    times = (np.arange(samples) + 1) * (duration / samples)
    kernels = []
    for t in times:
        s = math.sin(p.frequency * t)
        b2 = p.amplitude * math.exp(-p.damping * t / 2) * s
        b3 = math.exp(p.damping * t / 2) * s / p.frequency**2
        kernels.append(GaussianForm(SigmaCoefficients(b2=b2, b3=b3, **QBM_CONSTANTS)))
    return CoefficientTrajectory(times, kernels)


def qbm_det_envelope(p: QbmParams, t) -> np.ndarray:
    return p.amplitude * p.frequency**2 * np.exp(-p.damping * np.asarray(t, dtype=float))


def b2_zeros(traj: CoefficientTrajectory) -> np.ndarray:
    """Times where ``b2`` changes sign, refined by linear interpolation."""
    t, b2 = traj.times, traj.column("b2")
    out = list(t[b2 == 0])
    idx = np.nonzero(b2[:-1] * b2[1:] < 0)[0]
    out += list(t[idx] - b2[idx] * (t[idx + 1] - t[idx]) / (b2[idx + 1] - b2[idx]))
    return np.sort(np.array(out, dtype=float))


@dataclass
class SingularScan:
    threshold: float
    times: np.ndarray
    dets: np.ndarray
    divergent: np.ndarray
    notes: list[str]

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "flagged": [
                {"t": float(t), "det": float(d), "tag": "approach to A2"}
                for t, d in zip(self.times, self.dets)
            ],
            "divergent_times": self.divergent.tolist(),
            "notes": self.notes,
        }


def singular_time_scan(traj: CoefficientTrajectory, threshold: float) -> SingularScan:
    """Sample times with ``|det T| < threshold``, each an approach to class A2."""
    if traj.form is not GaussianForm:
        raise InvalidDomain("singular_time_scan expects a GaussianForm trajectory")
    dets = np.array([np.linalg.det(to_affine(k).T) for k in traj.kernels])
    mask = np.abs(dets) < threshold
    notes = [
        "times where b2 vanishes make the generator coefficients diverge; "
        "they are reported separately and are not singular channels"
    ]
    return SingularScan(float(threshold), traj.times[mask], dets[mask], b2_zeros(traj), notes)
