"""The Gauss-Markov source U_i = a U_{i-1} + Z_i and its decorrelation.

Blocks start from U_0 = 0, so Z = A U with A unit lower bidiagonal
(ones on the diagonal, -a below it). The covariance of a block is
sigma2 * (A^T A)^{-1}, and the orthonormal eigenbasis S of A^T A turns a
block into independent coordinates X = S^T U.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, signal

from .errors import ConfigurationError, DomainError
from .stats_core import RngStream

DEFAULT_MAX_N = 4096


@dataclass(frozen=True)
class SourceParams:
    """AR(1) gain ``a`` in [0, 1) and innovation variance ``sigma2`` > 0."""

    a: float
    sigma2: float = 1.0

    def __post_init__(self):
        a, s2 = float(self.a), float(self.sigma2)
        if not (0.0 <= a < 1.0):
            raise DomainError(f"gain a must satisfy 0 <= a < 1, got {self.a!r}")
        if not (s2 > 0.0 and np.isfinite(s2)):
            raise DomainError(f"sigma2 must be positive and finite, got {self.sigma2!r}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "sigma2", s2)

    @property
    def stationary_variance(self) -> float:
        return self.sigma2 / (1.0 - self.a * self.a)


def _check_n(n) -> int:
    if int(n) != n or n < 1:
        raise DomainError(f"blocklength must be a positive integer, got {n!r}")
    return int(n)


def sample_blocks(params: SourceParams, n: int, count: int, rng: RngStream) -> np.ndarray:
    """``count`` independent blocks U_1..U_n, shape (count, n)."""
    n = _check_n(n)
    z = rng.standard_normal((int(count), n)) * np.sqrt(params.sigma2)
    if params.a == 0.0:
        return z
    return signal.lfilter([1.0], [1.0, -params.a], z, axis=1)


def sample_block(params: SourceParams, n: int, rng: RngStream) -> np.ndarray:
    """One block U_1..U_n driven by i.i.d. N(0, sigma2) innovations."""
    return sample_blocks(params, n, 1, rng)[0]


def innovations_to_block(params: SourceParams, z: np.ndarray) -> np.ndarray:
    """Run the recursion on given innovations (last axis is time)."""
    z = np.asarray(z, dtype=float)
    if params.a == 0.0:
        return z.copy()
    return signal.lfilter([1.0], [1.0, -params.a], z, axis=-1)


def apply_A(params: SourceParams, u: np.ndarray) -> np.ndarray:
    """z_1 = u_1, z_i = u_i - a u_{i-1}; inverts the recursion."""
    u = np.asarray(u, dtype=float)
    z = u.copy()
    z[..., 1:] -= params.a * u[..., :-1]
    return z


def matrix_A(params: SourceParams, n: int) -> np.ndarray:
    n = _check_n(n)
    return np.eye(n) - params.a * np.eye(n, k=-1)


def block_covariance(params: SourceParams, n: int) -> np.ndarray:
    """sigma2 (A^T A)^{-1}, built by explicit inversion."""
    A = matrix_A(params, n)
    return params.sigma2 * np.linalg.inv(A.T @ A)


@dataclass(frozen=True)
class Decorrelator:
    """Orthonormal eigenbasis of A^T A for one blocklength.

    Column i of ``basis`` pairs with ``eigen.mu[i]`` (ascending), hence with
    the descending variances ``eigen.sigma_sq``.
    """

    n: int
    eigen: "object"
    basis: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, params: SourceParams, n: int, max_n: int = DEFAULT_MAX_N) -> "Decorrelator":
        from .eigen import exact_eigenvalues, tridiagonal_coefficients

        n = _check_n(n)
        if n > max_n:
            raise ConfigurationError(f"decorrelator blocklength {n} exceeds the cap {max_n}")
        spectrum = exact_eigenvalues(params, n)
        if n == 1:
            basis = np.ones((1, 1))
        else:
            diag, off = tridiagonal_coefficients(params, n)
            _, basis = linalg.eigh_tridiagonal(diag, off, lapack_driver="stebz")
        basis.setflags(write=False)
        return cls(n=n, eigen=spectrum, basis=basis)


def decorrelate(dec: Decorrelator, u: np.ndarray) -> np.ndarray:
    """x = S^T u for a block or a stack of blocks (rows)."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != dec.n:
        raise DomainError(f"block length {u.shape[-1]} does not match decorrelator n={dec.n}")
    return u @ dec.basis


def reconstruct(dec: Decorrelator, x: np.ndarray) -> np.ndarray:
    """u = S x, the inverse of :func:`decorrelate`."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dec.n:
        raise DomainError(f"block length {x.shape[-1]} does not match decorrelator n={dec.n}")
    return x @ dec.basis.T
