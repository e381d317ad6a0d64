"""One-mode Gaussian channels in the position representation."""

from .core import (
    DEFAULT_TOL,
    OMEGA,
    AffineChannel,
    ChannelClass,
    GaussianState,
    SingularChannel,
    apply,
    classify,
    compose,
    cp_matrix,
    invert,
    is_cp,
    is_unitary,
    rank,
)
from .kernels import FormI, FormII, GaussianForm, InvalidDomain, SigmaCoefficients

__all__ = [
    "DEFAULT_TOL",
    "OMEGA",
    "AffineChannel",
    "ChannelClass",
    "FormI",
    "FormII",
    "GaussianForm",
    "GaussianState",
    "InvalidDomain",
    "SigmaCoefficients",
    "SingularChannel",
    "apply",
    "classify",
    "compose",
    "cp_matrix",
    "invert",
    "is_cp",
    "is_unitary",
    "rank",
]

__version__ = "0.1.0"
