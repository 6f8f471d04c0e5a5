"""Maximum-likelihood gain estimate and the quadratic form behind its tail bound.

The event a_hat - a > eta is the event W > 0 with

    W = sum_{i<n} (U_i Z_{i+1} - eta U_i^2) = Z^T Q Z,

and the Hanson-Wright inequality bounds P[W > 0] through E[W], ||Q||_F
and ||Q||. This module builds Q, its closed-form moments, and the
resulting exponential envelope, and runs the matching Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DegenerateInputError, DomainError
from .source_model import SourceParams, innovations_to_block
from .stats_core import RngStream, map_chunks, wilson_interval

DEFAULT_HW_CONSTANT = 1.0 / 8.0
MAX_DENSE_N = 4096


def mle_estimate(u) -> float:
    """a_hat = sum_{i<n} u_i u_{i+1} / sum_{i<n} u_i^2 (not clamped)."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.shape[0] < 2:
        raise DomainError("the gain estimate needs a block of length >= 2")
    den = float(np.dot(u[:-1], u[:-1]))
    if den == 0.0:
        raise DegenerateInputError("gain estimate undefined: u_1..u_{n-1} are all zero")
    return float(np.dot(u[:-1], u[1:])) / den


def mle_estimates(blocks: np.ndarray) -> np.ndarray:
    """Row-wise :func:`mle_estimate` for a stack of blocks."""
    blocks = np.asarray(blocks, dtype=float)
    head = blocks[:, :-1]
    den = np.einsum("ij,ij->i", head, head)
    if np.any(den == 0.0):
        raise DegenerateInputError("gain estimate undefined for a block with zero prefix")
    return np.einsum("ij,ij->i", head, blocks[:, 1:]) / den


@dataclass(frozen=True)
class QuadraticForm:
    n: int
    eta: float
    variant: str
    entries: np.ndarray = field(repr=False)
    trace: float
    frob_sq: float
    op_norm_bound: float


def quadratic_form_entries(params: SourceParams, n: int, eta: float, variant: str = "Q") -> np.ndarray:
    """Dense matrix with Z^T M Z = sum_{i<n} (s U_i Z_{i+1} - eta U_i^2), s = +1 for Q, -1 for S."""
    if variant not in ("Q", "S"):
        raise DomainError(f"variant must be 'Q' or 'S', got {variant!r}")
    n = int(n)
    a = params.a
    one_m = 1.0 - a * a
    i = np.arange(1, n + 1)[:, None]
    j = np.arange(1, n + 1)[None, :]
    k = np.abs(i - j)
    sign = 1.0 if variant == "Q" else -1.0
    cross = sign * 0.5 * np.power(a, np.maximum(k - 1, 0))
    decay = (np.power(a, k) - np.power(a, 2 * n - i - j)) / one_m
    m = np.where(k == 0, 0.0, cross) - eta * decay
    return m


def build_Q(params: SourceParams, n: int, eta: float, variant: str = "Q") -> QuadraticForm:
    if n < 2:
        raise DomainError(f"quadratic form needs n >= 2, got {n}")
    if not eta > 0.0:
        raise DomainError(f"eta must be positive, got {eta!r}")
    if n > MAX_DENSE_N:
        raise ConfigurationError(f"dense quadratic form capped at n <= {MAX_DENSE_N}, got {n}")
    m = quadratic_form_entries(params, n, eta, variant)
    m.setflags(write=False)
    return QuadraticForm(
        n=int(n), eta=float(eta), variant=variant, entries=m,
        trace=float(np.trace(m)), frob_sq=float(np.sum(m * m)),
        op_norm_bound=float(np.max(np.sum(np.abs(m), axis=1))),
    )


def trace_closed_form(params: SourceParams, n: int, eta: float) -> float:
    """tr(Q) = -eta n/(1-a^2) + eta (1 - a^{2n})/(1-a^2)^2, so E[W] = sigma2 tr(Q)."""
    q = 1.0 - params.a**2
    return -eta * n / q + eta * (1.0 - params.a ** (2 * n)) / q**2


def frobenius_closed_form(params: SourceParams, n: int, eta: float) -> float:
    """||Q||_F^2 in closed form (a^{2n}/a is evaluated as a^{2n-1} so that a = 0 is allowed)."""
    a = params.a
    q = 1.0 - a * a
    a2n = a ** (2 * n)
    slope = (
        1.0 / (2.0 * q)
        + ((1.0 + a * a) * eta**2 - 2.0 * a * q * eta) / q**3
        + (4.0 * a * eta**2 - 2.0 * q * eta) * a ** (2 * n - 1) / q**3
    )
    const = 4.0 * a * eta / q**3 - 1.0 / (2.0 * q**2) - eta**2 * (4.0 * a * a + 1.0) / q**4
    tail = (4.0 * a * a * eta**2 / q**4 + 1.0 / (2.0 * q**2) - 4.0 * a * eta / q**3) * a2n
    return slope * n + const + tail + eta**2 * a ** (4 * n) / q**4


def recursion_W(params: SourceParams, z: np.ndarray, eta: float, variant: str = "Q") -> np.ndarray:
    """W (or V for the S variant) computed from innovations through the U recursion."""
    z = np.asarray(z, dtype=float)
    u = innovations_to_block(params, z)
    sign = 1.0 if variant == "Q" else -1.0
    head = u[..., :-1]
    return np.sum(sign * head * z[..., 1:] - eta * head * head, axis=-1)


def quadratic_identity_check(
    params: SourceParams, n: int, eta: float, rng: RngStream, trials: int, variant: str = "Q",
) -> float:
    """max |W_recursion - Z^T Q Z| / (1 + |W|) over ``trials`` innovation draws."""
    m = quadratic_form_entries(params, n, eta, variant)
    z = rng.standard_normal((int(trials), int(n))) * math.sqrt(params.sigma2)
    w_rec = recursion_W(params, z, eta, variant)
    w_quad = np.einsum("ij,jk,ik->i", z, m, z)
    return float(np.max(np.abs(w_rec - w_quad) / (1.0 + np.abs(w_rec))))


def power_iteration_norm(m: np.ndarray, iters: int = 500, seed: int = 0) -> float:
    """Spectral norm of a symmetric matrix by power iteration on M^2."""
    v = np.random.default_rng(seed).standard_normal(m.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = m @ (m @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        new = math.sqrt(nw)
        if abs(new - est) <= 1e-13 * new:
            return new
        est = new
    return est


@dataclass(frozen=True)
class KConstants:
    K1: float
    K2: float
    K3: float
    K2p: float
    K3p: float
    c1: float
    c2: float


def k_constants(params: SourceParams, eta: float) -> KConstants:
    a = params.a
    q = 1.0 - a * a
    K1 = 1.0 / (2.0 * q)
    K2 = 1.0 / q + 2.0 * (1.0 + 5.0 * a * a) * eta**2 / q**3
    K3 = 1.0 / (1.0 - a) + eta / q + 2.0 * eta / (1.0 - a) ** 2
    K2p = 1.0 / q + 2.0 * (5.0 + a * a) / q**3
    K3p = (a + 4.0) / ((1.0 - a) ** 2 * (1.0 + a))
    return KConstants(K1=K1, K2=K2, K3=K3, K2p=K2p, K3p=K3p, c1=K1 * K1 / K2p, c2=K1 / K3p)


def hw_envelope(params: SourceParams, n: int, eta: float, c: float = DEFAULT_HW_CONSTANT) -> float:
    """2 exp[-c min(c1 eta^2 n, c2 eta n)], clamped to [0, 1]."""
    if not (0.0 < eta < 1.0):
        raise DomainError(f"eta must lie in (0, 1), got {eta!r}")
    if not c > 0.0:
        raise DomainError(f"Hanson-Wright constant c must be positive, got {c!r}")
    k = k_constants(params, eta)
    val = 2.0 * math.exp(-c * min(k.c1 * eta * eta * n, k.c2 * eta * n))
    return min(1.0, max(0.0, val))


def kappa(params: SourceParams, c: float = DEFAULT_HW_CONSTANT) -> float:
    return c / (8.0 * (1.0 - params.a ** 2))


def log_envelope(params: SourceParams, n: int, alpha: float, c: float = DEFAULT_HW_CONSTANT) -> float:
    """2 / (log n)^{kappa alpha}, the envelope for the shrinking threshold eta_n."""
    return min(1.0, 2.0 / math.log(n) ** (kappa(params, c) * alpha))


@dataclass(frozen=True)
class MleExperimentReport:
    n: int
    eta: float
    trials: int
    exceed_count: int
    exceed_freq: float
    ci_low: float
    ci_high: float
    hw_bound: float
    c: float
    mode: str
    k_constants: KConstants


def mle_error_experiment(
    params: SourceParams,
    n_list: Sequence[int],
    trials: int,
    rng: RngStream,
    eta: float | None = None,
    alpha: float | None = None,
    c: float = DEFAULT_HW_CONSTANT,
    chunk: int = 1000,
    workers: int = 1,
) -> list[MleExperimentReport]:
    """Empirical P[|a_hat - a| > eta] per n, with the matching envelope.

    Give ``eta`` for a fixed threshold, or ``alpha`` for eta_n = sqrt(alpha log log n / n).
    The k-th entry of ``n_list`` draws from ``rng.substream(k)``.
    """
    from .tilted_crem import eta_sequence

    if trials < 1000:
        raise DomainError(f"the gain experiment needs at least 1000 trials, got {trials}")
    if (eta is None) == (alpha is None):
        raise DomainError("give exactly one of eta (fixed) or alpha (eta_n mode)")
    reports = []
    for idx, n in enumerate(n_list):
        n = int(n)
        if eta is not None:
            thr, mode = float(eta), "fixed"
            bound = hw_envelope(params, n, thr, c)
        else:
            thr, mode = eta_sequence(n, alpha), "eta_n"
            bound = log_envelope(params, n, alpha, c)
        sqrt_s2 = math.sqrt(params.sigma2)

        def draw(count, stream, n=n):
            z = stream.standard_normal((count, n)) * sqrt_s2
            return np.abs(mle_estimates(innovations_to_block(params, z)) - params.a)

        err = map_chunks(draw, trials, rng.substream(idx), chunk=chunk, workers=workers)
        hits = int(np.sum(err > thr))
        lo, hi = wilson_interval(hits, trials)
        reports.append(MleExperimentReport(
            n=n, eta=thr, trials=int(trials), exceed_count=hits, exceed_freq=hits / trials,
            ci_low=lo, ci_high=hi, hw_bound=bound, c=float(c), mode=mode,
            k_constants=k_constants(params, thr),
        ))
    return reports
