"""Finite-blocklength rate curves and small-n coding experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .eigen import EigenSpectrum
from .errors import ConfigurationError, DomainError
from .source_model import SourceParams
from .stats_core import RngStream, chi2_quantile, map_chunks, q_inverse, wilson_interval
from .tilted_crem import d_tilted_info, output_variances, sample_decorrelated
from .waterfill import limiting_solve_from_d, nth_order_solve

RANDOM_CODE_MAX_N = 16
RANDOM_CODE_MAX_M = 2**20
CURVE_KINDS = ("gaussian_approx", "geometric_converse", "general_converse", "random_coding", "iid_reference")


@dataclass(frozen=True)
class BoundCurve:
    kind: str
    points: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in CURVE_KINDS:
            raise DomainError(f"unknown curve kind {self.kind!r}")


def _check_eps(eps: float) -> float:
    if not (0.0 < eps < 1.0):
        raise DomainError(f"excess-distortion probability must lie in (0, 1), got {eps!r}")
    return float(eps)


def gaussian_approx_rate(params: SourceParams, d: float, eps: float, n: int) -> float:
    """R(d) + sqrt(V(d)/n) Q^{-1}(eps)."""
    _check_eps(eps)
    if n < 1:
        raise DomainError(f"blocklength must be >= 1, got {n}")
    pt = limiting_solve_from_d(params, d)
    return pt.rate + math.sqrt(pt.dispersion / n) * q_inverse(eps)


def converse_radius(params: SourceParams, eps: float, n: int) -> float:
    """r(n, eps) with P[chi2_n < n r / sigma2] = 1 - eps."""
    return params.sigma2 * chi2_quantile(1.0 - _check_eps(eps), n) / n


def geometric_converse_rate(params: SourceParams, d: float, eps: float, n: int) -> float:
    """1/2 log(r(n, eps)/d) when r > d, else 0. Does not depend on the gain a."""
    if not d > 0.0:
        raise DomainError(f"distortion must be positive, got {d!r}")
    r = converse_radius(params, eps, n)
    return 0.5 * math.log(r / d) if r > d else 0.0


def iid_reference(params: SourceParams, d: float) -> tuple[float, float]:
    """Rate and dispersion of the memoryless source with variance sigma2."""
    if not d > 0.0:
        raise DomainError(f"distortion must be positive, got {d!r}")
    rate = max(0.0, 0.5 * math.log(params.sigma2 / d))
    return rate, (0.5 if d <= params.sigma2 else 0.0)


@dataclass(frozen=True)
class ConverseEstimate:
    eps_bound: float
    raw: float
    tail_prob: float
    stderr: float
    clamped: bool
    gamma: float


def general_converse_eps(
    spec: EigenSpectrum, d: float, log_M: float, gamma: float | None, trials: int, rng: RngStream,
    chunk: int = 1000, workers: int = 1,
) -> ConverseEstimate:
    """P[j(X, d) >= log M + gamma] - exp(-gamma), estimated by sampling.

    ``gamma=None`` selects 1/2 log n. Negative estimates are clamped to 0.
    """
    if trials < 1000:
        raise DomainError(f"the converse estimate needs at least 1000 trials, got {trials}")
    g = 0.5 * math.log(spec.n) if gamma is None else float(gamma)
    theta = nth_order_solve(spec, d).theta

    def draw(count, stream):
        return d_tilted_info(spec, theta, sample_decorrelated(spec, count, stream))

    j = map_chunks(draw, trials, rng, chunk=chunk, workers=workers)
    hits = j >= log_M + g
    p = float(np.mean(hits))
    raw = p - math.exp(-g)
    return ConverseEstimate(
        eps_bound=max(raw, 0.0), raw=raw, tail_prob=p,
        stderr=math.sqrt(p * (1.0 - p) / trials), clamped=raw < 0.0, gamma=g,
    )


@dataclass(frozen=True)
class RandomCodeResult:
    M: int
    trials: int
    failures: int
    eps_hat: float
    ci_low: float
    ci_high: float


def _check_code_budget(n: int, M_max: int, trials: int):
    if n > RANDOM_CODE_MAX_N:
        raise ConfigurationError(f"random coding limited to n <= {RANDOM_CODE_MAX_N}, got {n}")
    if M_max > RANDOM_CODE_MAX_M:
        raise ConfigurationError(f"random coding limited to M <= 2^20, got {M_max}")
    if trials < 1000:
        raise ConfigurationError(f"random coding needs at least 1000 trials, got {trials}")


def random_code_sweep(
    spec: EigenSpectrum, d: float, M_grid: Sequence[int], trials: int, rng: RngStream,
    stop_below: float | None = None, batch: int = 8192,
) -> list[RandomCodeResult]:
    """Excess-distortion frequency of a fresh Gaussian random codebook, for each M.

    Codewords are i.i.d. N(0, max(sigma_i^2 - theta_n, 0)). Trial t draws its
    source block and then an unbounded codeword sequence from
    ``rng.substream(t)``; the codebook of size M is the first M entries, so
    each M sees an exact fresh codebook and the frequencies share random
    numbers across M. A trial fails at M when none of its first M codewords
    lies within distortion d. ``stop_below`` ends the sweep once the
    frequency reaches that level.
    """
    grid = [int(m) for m in M_grid]
    if not grid or any(m < 1 for m in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("M grid must be strictly increasing positive integers")
    n = spec.n
    _check_code_budget(n, grid[-1], trials)
    theta = nth_order_solve(spec, d).theta
    nu = np.sqrt(output_variances(spec, theta))
    sd = np.sqrt(spec.sigma_sq)
    limit = n * d
    streams = [rng.substream(t) for t in range(trials)]
    x = np.stack([s.standard_normal(n) * sd for s in streams])
    unresolved = np.ones(trials, dtype=bool)
    drawn = 0
    out = []
    for M in grid:
        for t in np.flatnonzero(unresolved):
            gen, xt, k = streams[t], x[t], drawn
            while k < M:
                b = min(batch, M - k)
                y = gen.standard_normal((b, n)) * nu
                diff = y - xt
                if np.any(np.einsum("ij,ij->i", diff, diff) <= limit):
                    unresolved[t] = False
                    break
                k += b
        drawn = M
        fails = int(np.sum(unresolved))
        lo, hi = wilson_interval(fails, trials)
        out.append(RandomCodeResult(M=M, trials=trials, failures=fails, eps_hat=fails / trials, ci_low=lo, ci_high=hi))
        if stop_below is not None and fails / trials <= stop_below:
            break
    return out


def simulate_random_code(spec: EigenSpectrum, d: float, M: int, trials: int, rng: RngStream) -> RandomCodeResult:
    """Excess-distortion frequency for a single codebook size M."""
    return random_code_sweep(spec, d, [M], trials, rng)[0]


def bound_curve(kind: str, params: SourceParams, d: float, eps: float, n_list: Sequence[int]) -> BoundCurve:
    """Analytic curves as (n, rate) points."""
    if kind == "gaussian_approx":
        pts = [(int(n), gaussian_approx_rate(params, d, eps, n)) for n in n_list]
    elif kind == "geometric_converse":
        pts = [(int(n), geometric_converse_rate(params, d, eps, n)) for n in n_list]
    elif kind == "iid_reference":
        rate, disp = iid_reference(params, d)
        pts = [(int(n), rate + math.sqrt(disp / n) * q_inverse(eps)) for n in n_list]
    else:
        raise DomainError(f"{kind!r} is not an analytic curve")
    return BoundCurve(kind=kind, points=pts, config={"a": params.a, "sigma2": params.sigma2, "d": d, "eps": eps})
