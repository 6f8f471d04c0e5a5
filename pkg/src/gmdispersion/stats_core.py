"""Scalar statistical primitives: normal tail, chi-square, seeded streams.

The normal tail uses ``math.erfc`` (correctly rounded to a few ulps over the
whole real line), so quantile inversion is limited only by the Newton
polish. The chi-square distribution is the regularized incomplete gamma
function from ``scipy.special``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .errors import ConvergenceError, DomainError

_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def q_function(t: float) -> float:
    """Gaussian tail probability P[N(0,1) > t]."""
    t = float(t)
    if not math.isfinite(t):
        raise DomainError(f"q_function needs a finite argument, got {t!r}")
    return 0.5 * math.erfc(t / _SQRT2)


def _log_q(t: float) -> float:
    # log_ndtr stays finite where erfc underflows
    return float(special.log_ndtr(-t))


def q_inverse(eps: float) -> float:
    """Inverse of :func:`q_function` on (0, 1).

    Solves log Q(t) = log eps by Newton steps kept inside a bisection
    bracket. Upper-half inputs are mapped through the exact reflection
    1 - eps so that q_inverse(1 - eps) == -q_inverse(eps) bit for bit.
    """
    eps = float(eps)
    if not (0.0 < eps < 1.0):
        raise DomainError(f"q_inverse needs eps in (0, 1), got {eps!r}")
    if eps > 0.5:
        return -q_inverse(1.0 - eps)
    if eps == 0.5:
        return 0.0
    target = math.log(eps)
    lo, hi = 0.0, 1.0
    while _log_q(hi) > target:
        lo, hi = hi, 2.0 * hi
        if hi > 64.0:
            raise DomainError(f"q_inverse: eps={eps!r} is below representable tail mass")
    t = 0.5 * (lo + hi)
    for _ in range(200):
        lq = _log_q(t)
        f = lq - target
        if f > 0.0:
            lo = t
        else:
            hi = t
        # d/dt log Q(t) = -phi(t)/Q(t)
        slope = -math.exp(-0.5 * t * t - _LOG_SQRT_2PI - lq)
        step = f / slope
        t_new = t - step
        if not (lo < t_new < hi):
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= 1e-16 * max(1.0, abs(t)) or hi - lo <= 1e-16 * max(1.0, hi):
            return t_new
        t = t_new
    raise ConvergenceError("q_inverse did not converge", {"eps": eps, "bracket": (lo, hi)})


def _check_dof(n) -> int:
    if int(n) != n or n < 1:
        raise DomainError(f"degrees of freedom must be a positive integer, got {n!r}")
    return int(n)


def chi2_cdf(x: float, n: int) -> float:
    """Chi-square CDF with n degrees of freedom, P(n/2, x/2)."""
    n = _check_dof(n)
    x = float(x)
    if x < 0.0 or math.isnan(x):
        raise DomainError(f"chi2_cdf needs x >= 0, got {x!r}")
    return float(special.gammainc(0.5 * n, 0.5 * x))


def _chi2_logpdf(x: float, n: int) -> float:
    k = 0.5 * n
    return (k - 1.0) * math.log(x) - 0.5 * x - k * math.log(2.0) - math.lgamma(k)


def chi2_quantile(p: float, n: int) -> float:
    """Inverse chi-square CDF.

    Starts from ``scipy.special.gammaincinv`` (or its complement in the
    upper half) and polishes with safeguarded Newton steps on whichever
    tail is smaller, which keeps the CDF residual near machine precision.
    """
    n = _check_dof(n)
    p = float(p)
    if not (0.0 < p < 1.0):
        raise DomainError(f"chi2_quantile needs p in (0, 1), got {p!r}")
    k = 0.5 * n
    upper = p > 0.5
    if upper:
        q = 1.0 - p
        x = 2.0 * float(special.gammainccinv(k, q))

        def resid(v):
            return q - float(special.gammaincc(k, 0.5 * v))
    else:
        x = 2.0 * float(special.gammaincinv(k, p))

        def resid(v):
            return float(special.gammainc(k, 0.5 * v)) - p
    for _ in range(8):
        if x <= 0.0:
            break
        r = resid(x)
        if r == 0.0:
            break
        step = r / math.exp(_chi2_logpdf(x, n))
        if not math.isfinite(step) or abs(step) > 0.5 * x:
            break
        x -= step
        if abs(step) <= 1e-16 * x:
            break
    return x


def double_factorial(k: int) -> int:
    """k!! = k (k-2) (k-4) ... down to 1 or 2; (-1)!! = 0!! = 1."""
    if int(k) != k or k < -1:
        raise DomainError(f"double_factorial needs an integer k >= -1, got {k!r}")
    return math.prod(range(int(k), 0, -2))


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise DomainError("wilson_interval needs at least one trial")
    phat = successes / trials
    denom = 1.0 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return lo, hi


class RngStream:
    """Deterministic random stream keyed by (seed, stream_id).

    Backed by numpy's PCG64 seeded through a ``SeedSequence`` whose spawn
    key is the stream path, so any substream can be recreated directly from
    its key without replaying the parent. Not thread safe; give each worker
    its own stream via :meth:`substream`.
    """

    def __init__(self, seed: int, stream_id: int = 0, _path: tuple[int, ...] | None = None):
        if int(seed) != seed or not (0 <= seed < 2**64):
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {seed!r}")
        if int(stream_id) != stream_id or not (0 <= stream_id < 2**64):
            raise DomainError(f"stream_id must be a 64-bit unsigned integer, got {stream_id!r}")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._path = (self.stream_id,) if _path is None else _path
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self._path)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def substream(self, index: int) -> "RngStream":
        """Independent child stream, a pure function of (seed, path, index)."""
        return RngStream(self.seed, self.stream_id, self._path + (int(index),))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def normal(self, size, scale=1.0) -> np.ndarray:
        return self._gen.normal(0.0, 1.0, size) * scale

    def standard_normal(self, size) -> np.ndarray:
        return self._gen.standard_normal(size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, path={self._path})"


def chunk_sizes(trials: int, chunk: int) -> list[int]:
    full, rest = divmod(int(trials), int(chunk))
    return [chunk] * full + ([rest] if rest else [])


def map_chunks(
    fn: Callable[[int, RngStream], np.ndarray],
    trials: int,
    rng: RngStream,
    chunk: int = 1000,
    workers: int = 1,
) -> np.ndarray:
    """Run ``fn(count, stream)`` over fixed-size chunks and concatenate.

    Chunk k always draws from ``rng.substream(k)``, so the result depends
    only on (trials, chunk, rng) and not on the number of workers.
    """
    sizes = chunk_sizes(trials, chunk)
    jobs: Sequence = [(m, rng.substream(k)) for k, m in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: fn(*job), jobs))
    else:
        parts = [fn(m, s) for m, s in jobs]
    return np.concatenate(parts, axis=0)
