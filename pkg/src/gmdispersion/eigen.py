"""Spectrum of A^T A, its Toeplitz approximants, and spectral integrals.

A^T A is symmetric tridiagonal with diagonal (1+a^2, ..., 1+a^2, 1) and
off-diagonal -a. Its eigenvalues are found by Sturm-sequence bisection,
all indices advanced together as one vectorized bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate

from .errors import ConvergenceError, DomainError
from .source_model import SourceParams, _check_n


@dataclass(frozen=True)
class EigenSpectrum:
    """Eigenvalues mu (ascending), variances sigma2/mu (descending), and xi."""

    params: SourceParams
    n: int
    mu: np.ndarray
    sigma_sq: np.ndarray
    xi: np.ndarray

    @property
    def mean_variance(self) -> float:
        return float(np.mean(self.sigma_sq))


def g_of_w(a: float, w):
    """1 + a^2 - 2a cos w."""
    return 1.0 + a * a - 2.0 * a * np.cos(w)


def power_spectrum(params: SourceParams, w):
    """S(w) = sigma2 / g(w)."""
    return params.sigma2 / g_of_w(params.a, w)


def spectrum_extrema(params: SourceParams) -> tuple[float, float]:
    """(theta_min, theta_max) = (sigma2/(1+a)^2, sigma2/(1-a)^2)."""
    a = params.a
    return params.sigma2 / (1.0 + a) ** 2, params.sigma2 / (1.0 - a) ** 2


def tridiagonal_coefficients(params: SourceParams, n: int) -> tuple[np.ndarray, np.ndarray]:
    n = _check_n(n)
    diag = np.full(n, 1.0 + params.a * params.a)
    diag[-1] = 1.0
    off = np.full(n - 1, -params.a)
    return diag, off


def sturm_count(diag: np.ndarray, off: np.ndarray, x) -> np.ndarray:
    """Number of eigenvalues strictly below each entry of ``x``.

    Counts negative pivots of the LDL^T factorization of T - xI; a pivot that
    lands on zero is nudged to -pivmin as in LAPACK's dstebz.
    """
    x = np.asarray(x, dtype=float)
    off_sq = np.asarray(off, dtype=float) ** 2
    pivmin = np.finfo(float).tiny * max(1.0, float(off_sq.max(initial=0.0)))
    q = diag[0] - x
    q = np.where(np.abs(q) < pivmin, -pivmin, q)
    count = (q < 0).astype(np.int64)
    for i in range(1, diag.shape[0]):
        q = (diag[i] - x) - off_sq[i - 1] / q
        q = np.where(np.abs(q) < pivmin, -pivmin, q)
        count += q < 0
    return count


def tridiagonal_eigenvalues(diag: np.ndarray, off: np.ndarray, max_iter: int = 200) -> np.ndarray:
    """All eigenvalues of a symmetric tridiagonal matrix, ascending."""
    diag = np.asarray(diag, dtype=float)
    off = np.asarray(off, dtype=float)
    n = diag.shape[0]
    if n == 1:
        return diag.copy()
    # Gershgorin interval, widened slightly so both ends bracket strictly.
    radius = np.zeros(n)
    radius[:-1] += np.abs(off)
    radius[1:] += np.abs(off)
    lo_g = float(np.min(diag - radius))
    hi_g = float(np.max(diag + radius))
    pad = 4 * np.finfo(float).eps * max(abs(lo_g), abs(hi_g)) + np.finfo(float).tiny
    lo = np.full(n, lo_g - pad)
    hi = np.full(n, hi_g + pad)
    k = np.arange(n)
    tol = 2 * np.finfo(float).eps
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        below = sturm_count(diag, off, mid) <= k
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        width = hi - lo
        if np.all(width <= tol * np.maximum(np.abs(lo), np.abs(hi)) + pad):
            return 0.5 * (lo + hi)
    raise ConvergenceError("Sturm bisection did not converge", {"max_width": float(np.max(hi - lo))})


def toeplitz_eigenvalues(params: SourceParams, n: int) -> np.ndarray:
    """xi_i = g(i pi / (n+1)), i = 1..n; ascending since g increases on [0, pi]."""
    n = _check_n(n)
    return g_of_w(params.a, np.arange(1, n + 1) * math.pi / (n + 1))


def exact_eigenvalues(params: SourceParams, n: int) -> EigenSpectrum:
    n = _check_n(n)
    if params.a == 0.0:
        mu = np.ones(n)
    else:
        mu = tridiagonal_eigenvalues(*tridiagonal_coefficients(params, n))
    xi = toeplitz_eigenvalues(params, n)
    sigma_sq = params.sigma2 / mu
    for arr in (mu, xi, sigma_sq):
        arr.setflags(write=False)
    return EigenSpectrum(params=params, n=n, mu=mu, sigma_sq=sigma_sq, xi=xi)


def kink_angle(params: SourceParams, theta: float) -> float | None:
    """Angle w in (0, pi) where S(w) = theta, or None if S never crosses theta."""
    a = params.a
    if a == 0.0:
        return None
    c = (1.0 + a * a - params.sigma2 / theta) / (2.0 * a)
    if -1.0 < c < 1.0:
        return math.acos(c)
    return None


def spectral_average(
    params: SourceParams,
    F: Callable[[float], float],
    kinks: Sequence[float] = (),
    epsabs: float = 1e-13,
    epsrel: float = 1e-12,
    limit: int = 500,
) -> float:
    """(1/2pi) int_{-pi}^{pi} F(S(w)) dw, computed as (1/pi) int_0^pi by evenness.

    ``kinks`` lists values theta at which F has a corner; the matching
    angles become panel boundaries for the adaptive Gauss-Kronrod rule.
    """
    if params.a == 0.0:
        return float(F(params.sigma2))
    points = sorted({w for w in (kink_angle(params, t) for t in kinks) if w is not None})
    a, s2 = params.a, params.sigma2

    def integrand(w):
        return F(s2 / (1.0 + a * a - 2.0 * a * math.cos(w)))

    val, err, info = _quad(integrand, points, epsabs, epsrel, limit)
    return val / math.pi


def _quad(f, points, epsabs, epsrel, limit):
    out = integrate.quad(
        f, 0.0, math.pi, points=points or None, epsabs=epsabs, epsrel=epsrel,
        limit=limit, full_output=1,
    )
    val, err, info = out[0], out[1], out[2]
    if len(out) > 3:
        # Warning raised; accept if the error estimate still meets a looser floor.
        if not (err <= max(1e-11, 1e-10 * abs(val))):
            raise ConvergenceError(
                "adaptive quadrature failed to converge",
                {"value": val, "abs_error": err, "message": out[3], "points": list(points)},
            )
    return val, err, info


class SzegoSum(NamedTuple):
    finite_sum: float
    integral: float
    gap: float


def szego_sum(
    params: SourceParams,
    n: int,
    F: Callable,
    kinks: Sequence[float] = (),
    spectrum: EigenSpectrum | None = None,
) -> SzegoSum:
    """Compare (1/n) sum F(sigma_i^2) against (1/2pi) int F(S(w)) dw.

    ``F`` must accept numpy arrays as well as scalars.
    """
    spec = spectrum if spectrum is not None else exact_eigenvalues(params, n)
    if spec.n != n:
        raise DomainError(f"spectrum has n={spec.n}, expected {n}")
    finite = float(np.mean(F(spec.sigma_sq)))
    integral = spectral_average(params, F, kinks)
    return SzegoSum(finite, integral, abs(finite - integral))
