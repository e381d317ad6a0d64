"""Gaussian states, affine channel tuples and the decision procedures on them.

A one-mode Gaussian channel acts on the moments of a Gaussian state as

    sigma -> T sigma T^T + N,      d -> T d + tau

Units are hbar = 1; the vacuum has ``sigma = I/2``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

DEFAULT_TOL = 1e-9

#: Symplectic form for the ordering (q, p).
OMEGA = np.array([[0.0, 1.0], [-1.0, 0.0]])
OMEGA.setflags(write=False)


class SingularChannel(ValueError):
    """Raised when an operation needs an invertible ``T``."""


def _frozen(a, shape, name):
    arr = np.array(a, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GaussianState:
    """Covariance matrix ``sigma`` and mean ``(<q>, <p>)`` of a one-mode state."""

    sigma: np.ndarray
    mean: np.ndarray

    def __init__(self, sigma, mean=(0.0, 0.0)):
        sigma = np.array(sigma, dtype=float)
        if sigma.shape != (2, 2):
            raise ValueError(f"sigma must be 2x2, got {sigma.shape}")
        if not np.all(np.isfinite(sigma)):
            raise ValueError("sigma must be finite")
        if abs(sigma[0, 1] - sigma[1, 0]) > 1e-12 * max(1.0, np.abs(sigma).max()):
            raise ValueError("sigma must be symmetric")
        sigma = 0.5 * (sigma + sigma.T)
        if sigma[0, 0] <= 0 or sigma[1, 1] <= 0:
            raise ValueError("sigma must have positive diagonal entries")
        object.__setattr__(self, "sigma", _frozen(sigma, (2, 2), "sigma"))
        object.__setattr__(self, "mean", _frozen(mean, (2,), "mean"))
        if not np.all(np.isfinite(self.mean)):
            raise ValueError("mean must be finite")

    @classmethod
    def vacuum(cls) -> GaussianState:
        return cls(0.5 * np.eye(2))

    def is_physical(self, tol: float = DEFAULT_TOL) -> bool:
        """Uncertainty relation ``det(sigma) >= 1/4``."""
        return bool(np.linalg.det(self.sigma) >= 0.25 - tol)

    def __repr__(self):
        return f"GaussianState(sigma={self.sigma.tolist()}, mean={self.mean.tolist()})"


@dataclass(frozen=True, eq=False)
class AffineChannel:
    """The ``(T, N, tau)`` tuple of a one-mode Gaussian channel."""

    T: np.ndarray
    N: np.ndarray
    tau: np.ndarray

    def __init__(self, T, N=None, tau=(0.0, 0.0)):
        T = np.array(T, dtype=float)
        N = np.zeros((2, 2)) if N is None else np.array(N, dtype=float)
        tau = np.array(tau, dtype=float)
        for name, arr in (("T", T), ("N", N), ("tau", tau)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
        if N.shape == (2, 2) and abs(N[0, 1] - N[1, 0]) > 1e-12 * max(1.0, np.abs(N).max()):
            raise ValueError("N must be symmetric")
        # store exactly symmetric from the upper triangle
        N = np.array([[N[0, 0], N[0, 1]], [N[0, 1], N[1, 1]]]) if N.shape == (2, 2) else N
        object.__setattr__(self, "T", _frozen(T, (2, 2), "T"))
        object.__setattr__(self, "N", _frozen(N, (2, 2), "N"))
        object.__setattr__(self, "tau", _frozen(tau, (2,), "tau"))

    @classmethod
    def identity(cls) -> AffineChannel:
        return cls(np.eye(2))

    def allclose(self, other: AffineChannel, atol: float = DEFAULT_TOL) -> bool:
        return (
            np.allclose(self.T, other.T, rtol=0, atol=atol)
            and np.allclose(self.N, other.N, rtol=0, atol=atol)
            and np.allclose(self.tau, other.tau, rtol=0, atol=atol)
        )

    def __repr__(self):
        return (
            f"AffineChannel(T={self.T.tolist()}, N={self.N.tolist()}, "
            f"tau={self.tau.tolist()})"
        )


class ChannelClass(enum.Enum):
    NON_SINGULAR = "NonSingular"
    A2 = "A2"
    A1 = "A1"


def apply(ch: AffineChannel, s: GaussianState) -> GaussianState:
    sigma = ch.T @ s.sigma @ ch.T.T + ch.N
    return GaussianState(0.5 * (sigma + sigma.T), ch.T @ s.mean + ch.tau)


def compose(outer: AffineChannel, inner: AffineChannel) -> AffineChannel:
    """Channel equal to applying ``inner`` first, then ``outer``."""
    N = outer.T @ inner.N @ outer.T.T + outer.N
    return AffineChannel(
        outer.T @ inner.T,
        0.5 * (N + N.T),
        outer.T @ inner.tau + outer.tau,
    )


def cp_matrix(ch: AffineChannel) -> np.ndarray:
    """``C = N + i Omega - i T Omega T^T``; the channel is CP iff ``C >= 0``."""
    return ch.N + 1j * OMEGA - 1j * (ch.T @ OMEGA @ ch.T.T)


def cp_min_eigenvalue(ch: AffineChannel) -> float:
    C = cp_matrix(ch)
    return float(np.linalg.eigvalsh(0.5 * (C + C.conj().T))[0])


def is_cp(ch: AffineChannel, tol: float = DEFAULT_TOL) -> bool:
    return cp_min_eigenvalue(ch) >= -tol


def is_unitary(ch: AffineChannel, tol: float = DEFAULT_TOL) -> bool:
    # for 2x2, T Omega T^T = det(T) Omega
    return bool(
        np.abs(ch.N).max() <= tol and abs(np.linalg.det(ch.T) - 1.0) <= tol
    )


def rank(T: np.ndarray, tol: float = DEFAULT_TOL) -> int:
    """Numerical rank of ``T``; threshold ``tol * max(|T|_max, 1)``."""
    T = np.asarray(T, dtype=float)
    scale = max(np.abs(T).max(), 1.0)
    sv = np.linalg.svd(T, compute_uv=False)
    return int(np.count_nonzero(sv > tol * scale))


def classify(ch: AffineChannel, tol: float = DEFAULT_TOL) -> ChannelClass:
    return {
        0: ChannelClass.A1,
        1: ChannelClass.A2,
        2: ChannelClass.NON_SINGULAR,
    }[rank(ch.T, tol)]


def invert(ch: AffineChannel, tol: float = DEFAULT_TOL) -> AffineChannel:
    if classify(ch, tol) is not ChannelClass.NON_SINGULAR:
        raise SingularChannel(f"T has rank {rank(ch.T, tol)} < 2")
    Ti = np.linalg.inv(ch.T)
    N = -Ti @ ch.N @ Ti.T
    return AffineChannel(Ti, 0.5 * (N + N.T), -Ti @ ch.tau)
