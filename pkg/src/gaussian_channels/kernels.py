"""Position-representation kernels of one-mode Gaussian channels.

Three functional forms act on ``rho(x, r) = <r - x/2| rho |r + x/2>``:

* :class:`GaussianForm` -- ``|b3|/(2 pi) exp(Sigma)`` with no ``r``-quadratic terms,
* :class:`FormI` -- ``N_I delta(alpha x_f - beta x_i) exp(Sigma)``,
* :class:`FormII` -- ``N_II delta(gamma r_f - eta r_i) delta(alpha x_f - beta x_i) exp(Sigma)``,

with the common exponent::

    Sigma = i(b1 xf rf + b2 xf ri + b3 xi rf + b4 xi ri + c1 xf + c2 xi)
            - a1 xf^2 - a2 xf xi - a3 xi^2
            - e1 rf^2 - e2 rf ri - e3 ri^2 - d1 rf - d2 ri
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Union

import numpy as np

from .core import DEFAULT_TOL

#: Absolute tolerance for coefficient equality and structural zero tests.
COEFF_ATOL = 1e-12


class InvalidDomain(ValueError):
    """A formula was evaluated outside the region where it is defined."""


@dataclass(frozen=True)
class SigmaCoefficients:
    a1: float = 0.0
    a2: float = 0.0
    a3: float = 0.0
    b1: float = 0.0
    b2: float = 0.0
    b3: float = 0.0
    b4: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    e1: float = 0.0
    e2: float = 0.0
    e3: float = 0.0
    d1: float = 0.0
    d2: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, float(getattr(self, f.name)))

    @classmethod
    def from_groups(cls, a=(0, 0, 0), b=(0, 0, 0, 0), c=(0, 0), e=(0, 0, 0), d=(0, 0)):
        names = {"a": 3, "b": 4, "c": 2, "e": 3, "d": 2}
        groups = {"a": a, "b": b, "c": c, "e": e, "d": d}
        kw = {}
        for g, n in names.items():
            vals = list(groups[g])
            if len(vals) != n:
                raise ValueError(f"coefficient group {g!r} needs {n} entries")
            kw.update({f"{g}{i + 1}": v for i, v in enumerate(vals)})
        return cls(**kw)

    def groups(self) -> dict[str, list[float]]:
        return {
            "a": [self.a1, self.a2, self.a3],
            "b": [self.b1, self.b2, self.b3, self.b4],
            "c": [self.c1, self.c2],
            "e": [self.e1, self.e2, self.e3],
            "d": [self.d1, self.d2],
        }

    def values(self) -> list[float]:
        return [getattr(self, f.name) for f in fields(self)]

    def replace(self, **kw) -> SigmaCoefficients:
        return replace(self, **kw)


@dataclass(frozen=True)
class GaussianForm:
    coeffs: SigmaCoefficients = field(default_factory=SigmaCoefficients)


@dataclass(frozen=True)
class FormI:
    coeffs: SigmaCoefficients = field(default_factory=SigmaCoefficients)
    alpha: float = 1.0
    beta: float = 1.0

    @property
    def ratio(self) -> float:
        """``alpha / beta``; the delta fixes ``x_i = ratio * x_f``."""
        if self.beta == 0:
            raise InvalidDomain("beta = 0")
        return self.alpha / self.beta


@dataclass(frozen=True)
class FormII:
    coeffs: SigmaCoefficients = field(default_factory=SigmaCoefficients)
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    eta: float = 1.0

    @property
    def ratio(self) -> float:
        if self.beta == 0:
            raise InvalidDomain("beta = 0")
        return self.alpha / self.beta

    @property
    def r_ratio(self) -> float:
        """``eta / gamma``; the r-delta fixes ``r_f = r_ratio * r_i``."""
        if self.gamma == 0:
            raise InvalidDomain("gamma = 0")
        return self.eta / self.gamma


KernelSpec = Union[GaussianForm, FormI, FormII]


def delta_parameters(k: KernelSpec) -> dict[str, float]:
    if isinstance(k, FormII):
        return {"alpha": k.alpha, "beta": k.beta, "gamma": k.gamma, "eta": k.eta}
    if isinstance(k, FormI):
        return {"alpha": k.alpha, "beta": k.beta}
    return {}


@dataclass
class ValidationReport:
    passed: bool
    residual: float
    tol: float
    violations: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def __bool__(self):
        return self.passed

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "residual": self.residual,
            "tol": self.tol,
            "violations": list(self.violations),
            "notes": list(self.notes),
        }


# deterministic probe points (x_f, r_f, x_i, r_i) for the hermiticity check
_HP_PROBES = np.array(
    [
        [0.3, -0.7, 0.5, 0.2],
        [-1.1, 0.4, 0.9, -0.6],
        [0.8, 1.3, -0.4, 0.7],
        [1.5, -0.2, -1.2, -1.0],
    ]
)


def validate_hp(k: KernelSpec) -> ValidationReport:
    """Hermiticity preservation ``J(-xf, rf; -xi, ri) = J(xf, rf; xi, ri)^*``.

    Real finite coefficients and the delta patterns carried by the three
    types are the HP-allowed structures; the residual is the probed
    violation of the identity on the smooth factor.
    """
    violations = []
    notes = []
    params = k.coeffs.values() + list(delta_parameters(k).values())
    if not all(math.isfinite(v) for v in params):
        violations.append("non-finite coefficient or delta parameter")
        return ValidationReport(False, math.inf, 0.0, violations)
    if isinstance(k, GaussianForm) and k.coeffs.b3 < 0:
        notes.append("b3 < 0: normalisation taken as |b3|/(2 pi)")
    xf, rf, xi, ri = _HP_PROBES.T
    with np.errstate(all="ignore"):
        lhs = np.exp(sigma_exponent(k.coeffs, -xf, rf, -xi, ri))
        rhs = np.conj(np.exp(sigma_exponent(k.coeffs, xf, rf, xi, ri)))
        scale = np.maximum(np.abs(rhs), 1e-300)
        residual = float(np.max(np.abs(lhs - rhs) / scale))
    if not math.isfinite(residual) or residual > 1e-12:
        violations.append("probe violates J(-xf,rf;-xi,ri) = J*")
    return ValidationReport(not violations, residual, 1e-12, violations, notes)


def tp_constraints(k: KernelSpec) -> dict[str, float]:
    """Signed residuals of the trace-preservation constraints."""
    c = k.coeffs
    if isinstance(k, GaussianForm):
        return {"e1": c.e1, "e2": c.e2, "e3": c.e3, "d1": c.d1, "d2": c.d2}
    if isinstance(k, FormI):
        if k.beta == 0:
            raise InvalidDomain("FormI needs beta != 0")
        if c.e1 <= 0:
            return {"e1_positive": c.e1}
        return {"e3_relation": c.e2**2 / (4 * c.e1) - c.e3, "d1": c.d1, "d2": c.d2}
    if k.beta == 0 or k.gamma == 0:
        raise InvalidDomain("FormII needs beta != 0 and gamma != 0")
    q = k.r_ratio
    return {
        "e_relation": c.e1 * q**2 + c.e2 * q + c.e3,
        "d_relation": c.d1 * q + c.d2,
    }


def validate_tp(k: KernelSpec, tol: float = DEFAULT_TOL) -> ValidationReport:
    cons = tp_constraints(k)
    if "e1_positive" in cons:
        return ValidationReport(
            False, math.inf, tol, [f"FormI needs e1 > 0, got {cons['e1_positive']}"]
        )
    residual = max((abs(v) for v in cons.values()), default=0.0)
    violations = [f"{name} = {v:.3e}" for name, v in cons.items() if not abs(v) <= tol]
    return ValidationReport(not violations, residual, tol, violations)


def normalization(k: KernelSpec) -> float:
    c = k.coeffs
    if isinstance(k, GaussianForm):
        if c.b3 == 0:
            raise InvalidDomain("GaussianForm needs b3 != 0")
        return abs(c.b3) / (2 * math.pi)
    if isinstance(k, FormI):
        if c.e1 <= 0:
            raise InvalidDomain("FormI needs e1 > 0")
        return abs(k.beta) * math.sqrt(c.e1 / math.pi)
    return abs(k.beta * k.gamma)


def sigma_exponent(c: SigmaCoefficients, xf, rf, xi, ri):
    """The quadratic exponent ``Sigma``, broadcast over array arguments."""
    imag = (
        c.b1 * xf * rf + c.b2 * xf * ri + c.b3 * xi * rf + c.b4 * xi * ri
        + c.c1 * xf + c.c2 * xi
    )
    real = -(
        c.a1 * xf * xf + c.a2 * xf * xi + c.a3 * xi * xi
        + c.e1 * rf * rf + c.e2 * rf * ri + c.e3 * ri * ri
        + c.d1 * rf + c.d2 * ri
    )
    return real + 1j * imag


def evaluate_smooth(k: KernelSpec, x_f, r_f, x_i, r_i):
    """``normalization(k) * exp(Sigma)``; delta factors are not included."""
    return normalization(k) * np.exp(sigma_exponent(k.coeffs, x_f, r_f, x_i, r_i))


@dataclass(frozen=True)
class CharRep:
    """Characteristic-function data of a delta-form kernel.

    The k-space propagator is ``delta(k1_i - ratio k1_f) delta(k2_i - phi . k_f)
    exp(P(k_f))`` with ``P(k) = sum_ij P_ij k_i k_j + i P01 k_1``.
    """

    ratio: float
    phi: tuple[float, float]
    P11: float
    P12: float
    P22: float
    P01: float  # imaginary part; P01 itself is purely imaginary


def char_rep(k: FormI | FormII) -> CharRep:
    c = k.coeffs
    A = k.ratio
    p01 = A * c.c2 + c.c1
    if isinstance(k, FormII):
        q = k.r_ratio
        return CharRep(
            ratio=A,
            phi=(A * q * c.b3 + A * c.b4 + q * c.b1 + c.b2, q),
            P11=-(A * A * c.a3 + A * c.a2 + c.a1),
            P12=0.0,
            P22=0.0,
            P01=p01,
        )
    if c.e1 == 0:
        raise InvalidDomain("FormI needs e1 != 0")
    e1, e2 = c.e1, c.e2
    return CharRep(
        ratio=A,
        phi=(A * (c.b4 - c.b3 * e2 / (2 * e1)) - c.b1 * e2 / (2 * e1) + c.b2, -e2 / (2 * e1)),
        P11=-(
            A * A * (c.a3 + c.b3**2 / (4 * e1))
            + A * (c.a2 + 0.5 * c.b1 * c.b3 / e1)
            + c.a1
            + c.b1**2 / (4 * e1)
        ),
        # symmetric convention: the k1 k2 cross term of P is 2 * P12
        P12=-(A * c.b3 + c.b1) / (4 * e1),
        P22=-1.0 / (4 * e1),
        P01=p01,
    )


def is_a1_pattern(k: FormI, atol: float = COEFF_ATOL) -> bool:
    c = k.coeffs
    return abs(c.e2) <= atol and abs(k.alpha) <= atol and abs(c.b2) <= atol


def cp_closed_form_margin(k: KernelSpec) -> float:
    """Smallest of the closed-form CP inequalities (CP iff it is >= 0).

    For the delta forms this is the ``-`` branch of the eigenvalue
    inequality pair; for the reduced total-depolarising pattern it is
    ``a1 - e1``; for the Gaussian form it is the smaller eigenvalue written
    through ``tr N``, ``det N = (4 a1 a3 - a2^2)/b3^2`` and ``det T = b2/b3``.
    """
    c = k.coeffs
    if isinstance(k, GaussianForm):
        if c.b3 == 0:
            raise InvalidDomain("GaussianForm needs b3 != 0")
        b1, b2, b3 = c.b1, c.b2, c.b3
        trace = 2 * c.a3 / b3**2 + 2 * c.a1 - 2 * c.a2 * b1 / b3 + 2 * c.a3 * b1**2 / b3**2
        det_n = (4 * c.a1 * c.a3 - c.a2**2) / b3**2
        gap = (1 - b2 / b3) ** 2
        disc = max(trace**2 / 4 - det_n + gap, 0.0)
        return trace / 2 - math.sqrt(disc)
    if isinstance(k, FormI):
        if is_a1_pattern(k):
            return c.a1 - c.e1
        if k.beta == 0 or c.e1 == 0:
            raise InvalidDomain("FormI needs beta != 0 and e1 != 0")
        p = char_rep(k)
        al, be, e1, e2 = k.alpha, k.beta, c.e1, c.e2
        root = math.sqrt(
            al**2 * e2**2
            + 4 * al * be * e2 * e1
            + 4 * be**2 * e1**2 * (4 * p.P12**2 + (p.P11 - p.P22) ** 2 + 1)
        ) / (2 * be * e1)
        return min(root, -root) - (p.P11 + p.P22)
    if k.beta == 0 or k.gamma == 0:
        raise InvalidDomain("FormII needs beta != 0 and gamma != 0")
    p = char_rep(k)
    al, be, ga, et = k.alpha, k.beta, k.gamma, k.eta
    root = math.sqrt((be * ga - al * et) ** 2 + be**2 * ga**2 * p.P11**2) / (be * ga)
    return min(root, -root) - p.P11


def cp_closed_form(k: KernelSpec, tol: float = DEFAULT_TOL) -> bool:
    return cp_closed_form_margin(k) >= -tol


def regularize(k: FormII, eps: float) -> FormI:
    """Replace ``delta(r_f - (eta/gamma) r_i)`` by a normalised Gaussian of width ``eps``."""
    if not eps > 0:
        raise InvalidDomain("eps must be > 0")
    q = k.r_ratio
    c = k.coeffs
    w = 1.0 / eps**2
    coeffs = c.replace(e1=c.e1 + w, e2=c.e2 - 2 * q * w, e3=c.e3 + q * q * w)
    return FormI(coeffs, k.alpha, k.beta)
