"""Reverse waterfilling over the spectrum S(w) (limiting) and over sigma_i^2 (order n).

At water level theta the limiting problem gives

    d(theta) = (1/2pi) int min(theta, S(w)) dw
    R        = (1/2pi) int max(0, 1/2 log(S(w)/theta)) dw
    V        = (1/4pi) int min(1, (S(w)/theta)^2) dw

and the order-n problem replaces the integrals by averages over sigma_i^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eigen import EigenSpectrum, spectral_average, spectrum_extrema
from .errors import ConvergenceError, DomainError
from .source_model import SourceParams


@dataclass(frozen=True)
class WaterfillPoint:
    """Matched (d, theta, rate, dispersion). ``n is None`` marks the limiting problem."""

    d: float
    theta: float
    rate: float
    dispersion: float | None = None
    n: int | None = None
    active_count: int | None = None

    @property
    def is_limiting(self) -> bool:
        return self.n is None


@dataclass(frozen=True)
class CriticalPoints:
    d_c: float
    d_max: float
    theta_min: float
    theta_max: float
    p1: tuple[float, float]
    p2: tuple[float, float]


def critical_points(params: SourceParams) -> CriticalPoints:
    a, s2 = params.a, params.sigma2
    theta_min, theta_max = spectrum_extrema(params)
    d_max = s2 / (1.0 - a * a)
    v2 = (1.0 + a * a) * (1.0 - a) / (2.0 * (1.0 + a) ** 3)
    return CriticalPoints(
        d_c=theta_min, d_max=d_max, theta_min=theta_min, theta_max=theta_max,
        p1=(theta_min, 0.5), p2=(d_max, v2),
    )


def limiting_distortion(params: SourceParams, theta: float) -> float:
    """(1/2pi) int min(theta, S(w)) dw, exact outside [theta_min, theta_max]."""
    theta_min, theta_max = spectrum_extrema(params)
    if theta <= theta_min:
        return float(theta)
    if theta >= theta_max:
        return params.stationary_variance
    return spectral_average(params, lambda s: min(theta, s), kinks=(theta,))


def limiting_rate(params: SourceParams, theta: float) -> float:
    """(1/2pi) int max(0, 1/2 log(S(w)/theta)) dw."""
    if theta >= spectrum_extrema(params)[1]:
        return 0.0
    return spectral_average(params, lambda s: max(0.0, 0.5 * math.log(s / theta)), kinks=(theta,))


def limiting_dispersion(params: SourceParams, theta: float) -> float:
    """(1/4pi) int min(1, (S(w)/theta)^2) dw."""
    return 0.5 * spectral_average(params, lambda s: min(1.0, (s / theta) ** 2), kinks=(theta,))


def limiting_solve_from_theta(params: SourceParams, theta: float) -> WaterfillPoint:
    theta = float(theta)
    if not (theta > 0.0 and math.isfinite(theta)):
        raise DomainError(f"water level must be positive and finite, got {theta!r}")
    d = min(limiting_distortion(params, theta), params.stationary_variance)
    return WaterfillPoint(
        d=d, theta=theta, rate=limiting_rate(params, theta),
        dispersion=limiting_dispersion(params, theta),
    )


def solve_theta(params: SourceParams, d: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Water level theta with (1/2pi) int min(theta, S) = d, for 0 < d < d_max."""
    d = float(d)
    d_max = params.stationary_variance
    if not (0.0 < d < d_max):
        raise DomainError(f"distortion must lie in (0, d_max) with d_max={d_max!r}, got {d!r}")
    theta_min, theta_max = spectrum_extrema(params)
    if d <= theta_min:
        return d
    lo, hi = theta_min * 1e-6, theta_max
    best, best_res = None, math.inf
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        res = limiting_distortion(params, mid) - d
        if abs(res) < best_res:
            best, best_res = mid, abs(res)
        if abs(res) <= tol * max(1.0, d):
            return mid
        if res < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    if best_res <= 1e-10 * max(1.0, d):
        return best
    raise ConvergenceError(
        "water level bisection stalled", {"d": d, "theta": best, "residual": best_res}
    )


def limiting_solve_from_d(params: SourceParams, d: float) -> WaterfillPoint:
    theta = solve_theta(params, d)
    return WaterfillPoint(
        d=float(d), theta=theta, rate=limiting_rate(params, theta),
        dispersion=limiting_dispersion(params, theta),
    )


def nth_order_solve(spec: EigenSpectrum, d: float) -> WaterfillPoint:
    """Exact order-n water level via the piecewise-linear map theta -> d_n(theta).

    Coordinates with sigma_i^2 == theta_n count as inactive.
    """
    d = float(d)
    s = np.sort(np.asarray(spec.sigma_sq, dtype=float))
    n = s.shape[0]
    mean_var = float(np.mean(s))
    if not (0.0 < d < mean_var):
        raise DomainError(f"distortion must lie in (0, mean variance={mean_var!r}), got {d!r}")
    prefix = np.concatenate(([0.0], np.cumsum(s)))
    # d_n evaluated at each breakpoint theta = s_j (j = 1..n).
    at_breaks = (prefix[1:] + s * (n - np.arange(1, n + 1))) / n
    k = int(np.searchsorted(at_breaks, d, side="right"))
    theta = (n * d - prefix[k]) / (n - k)
    sigma_sq = np.asarray(spec.sigma_sq)
    rate = float(np.mean(np.maximum(0.0, 0.5 * np.log(sigma_sq / theta))))
    return WaterfillPoint(
        d=d, theta=float(theta), rate=rate, n=n, active_count=int(np.sum(sigma_sq > theta)),
    )


def nth_order_d_from_theta(spec: EigenSpectrum, theta: float) -> float:
    """d_n = (1/n) sum min(theta, sigma_i^2)."""
    if not theta > 0.0:
        raise DomainError(f"water level must be positive, got {theta!r}")
    return float(np.mean(np.minimum(theta, spec.sigma_sq)))


def nth_order_rate_from_theta(spec: EigenSpectrum, theta: float) -> float:
    return float(np.mean(np.maximum(0.0, 0.5 * np.log(spec.sigma_sq / theta))))
