"""d-tilted information, the Gaussian CREM, and the MLE-typical set.

All computations run in decorrelated coordinates x = S^T u, where the
source is a vector of independent N(0, sigma_i^2) entries.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .eigen import EigenSpectrum
from .errors import DegenerateInputError, DomainError
from .estimator import mle_estimate, mle_estimates
from .source_model import Decorrelator, SourceParams, decorrelate
from .stats_core import RngStream, double_factorial, map_chunks
from .waterfill import limiting_solve_from_d, nth_order_d_from_theta, nth_order_solve


def _as_rows(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n:
        raise DomainError(f"input length {x.shape[-1]} does not match n={n}")
    return x


def d_tilted_info(spec: EigenSpectrum, theta_n: float, x) -> float | np.ndarray:
    """sum_i [min(theta, s_i)/(2 theta)] (x_i^2/s_i - 1) + 1/2 log(max(theta, s_i)/theta).

    ``x`` may be one block or a stack of blocks along the first axis.
    """
    s = np.asarray(spec.sigma_sq)
    x = _as_rows(x, s.shape[0])
    coef = np.minimum(theta_n, s) / (2.0 * theta_n)
    const = float(np.sum(0.5 * np.log(np.maximum(theta_n, s) / theta_n)))
    val = (x * x / s - 1.0) @ coef + const
    return float(val) if np.ndim(val) == 0 else val


def generalized_tilted_terms(nu_sq, x, delta: float, d_terms) -> np.ndarray:
    """Per-coordinate terms -delta d_i + delta x_i^2/(1+2 delta nu_i^2) + 1/2 log(1+2 delta nu_i^2)."""
    nu_sq = np.asarray(nu_sq, dtype=float)
    x = _as_rows(x, nu_sq.shape[0])
    if delta < 0.0 or np.any(nu_sq < 0.0):
        raise DomainError("generalized tilted information needs delta >= 0 and nu_sq >= 0")
    scale = 1.0 + 2.0 * delta * nu_sq
    return -delta * np.asarray(d_terms, dtype=float) + delta * x * x / scale + 0.5 * np.log(scale)


def generalized_tilted_info(nu_sq, x, delta: float, d: float) -> float | np.ndarray:
    """Lambda(x, delta, d) for codewords drawn from N(0, diag(nu_sq)).

    Equals -n delta d + sum delta x_i^2/(1+2 delta nu_i^2) + sum 1/2 log(1+2 delta nu_i^2),
    where d is the per-symbol distortion.
    """
    nu_sq = np.asarray(nu_sq, dtype=float)
    n = nu_sq.shape[0]
    x = _as_rows(x, n)
    if delta < 0.0 or np.any(nu_sq < 0.0):
        raise DomainError("generalized tilted information needs delta >= 0 and nu_sq >= 0")
    scale = 1.0 + 2.0 * delta * nu_sq
    val = -n * delta * d + (x * x) @ (delta / scale) + float(np.sum(0.5 * np.log(scale)))
    return float(val) if np.ndim(val) == 0 else val


def output_variances(spec: EigenSpectrum, theta_n: float) -> np.ndarray:
    """Variances max(0, sigma_i^2 - theta_n) of the optimal reproduction law."""
    return np.maximum(np.asarray(spec.sigma_sq) - theta_n, 0.0)


# --- Gaussian CREM ---------------------------------------------------------


def crem_distortion(input_vars, output_vars, delta) -> np.ndarray:
    """(1/n) sum [nu^2/(1+2 delta nu^2) + s^2/(1+2 delta nu^2)^2].

    ``input_vars`` may be a stack (rows) and ``delta`` a matching vector.
    """
    nu = np.asarray(output_vars, dtype=float)
    s = np.asarray(input_vars, dtype=float)
    delta = np.asarray(delta, dtype=float)
    scale = 1.0 + 2.0 * delta[..., None] * nu
    return np.mean(nu / scale + s / (scale * scale), axis=-1)


def solve_crem_slopes(input_vars, output_vars, d: float, tol: float = 1e-13) -> np.ndarray:
    """Vectorized bisection for delta* >= 0 with crem_distortion(delta*) = d.

    Rows of ``input_vars`` are independent problems sharing ``output_vars``.
    The distortion is nonincreasing in delta, so delta_hi doubles until it
    drops below d; d at or above the delta = 0 value returns 0.
    """
    s = np.atleast_2d(np.asarray(input_vars, dtype=float))
    nu = np.asarray(output_vars, dtype=float)
    if d <= 0.0:
        raise DomainError(f"distortion must be positive, got {d!r}")
    if np.any(s < 0.0) or np.any(nu < 0.0):
        raise DomainError("CREM variances must be nonnegative")
    rows = s.shape[0]
    floor = np.mean(np.where(nu == 0.0, s, 0.0), axis=-1)
    d0 = crem_distortion(s, nu, np.zeros(rows))
    if np.all(nu == 0.0):
        if np.all(np.abs(d0 - d) <= 1e-12 * max(1.0, d)):
            return np.zeros(rows)
        raise DomainError("all output variances vanish: distortion is fixed at the mean input variance")
    if np.any(floor >= d):
        raise DomainError(f"distortion {d!r} is not achievable: it is at or below the infinite-slope limit")
    done = d0 <= d
    lo = np.zeros(rows)
    hi = np.ones(rows)
    while True:
        above = (crem_distortion(s, nu, hi) > d) & ~done
        if not np.any(above):
            break
        lo = np.where(above, hi, lo)
        hi = np.where(above, 2.0 * hi, hi)
        if np.any(hi > 1e300):
            raise DomainError("CREM slope diverges; distortion not bracketable")
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        high = crem_distortion(s, nu, mid) > d
        lo = np.where(high, mid, lo)
        hi = np.where(high, hi, mid)
        if np.all(done | (hi - lo <= tol * hi)):
            break
    return np.where(done, 0.0, 0.5 * (lo + hi))


@dataclass(frozen=True)
class CremSolution:
    """Optimal slope and the Gaussian conditional law F_i | X_i = x_i.

    The conditional mean is ``mean_gain[i] * x_i`` and the conditional
    variance is ``cond_vars[i]``.
    """

    delta_star: float
    value: float
    mean_gain: np.ndarray = field(repr=False)
    cond_vars: np.ndarray = field(repr=False)
    distortion: float = math.nan

    def conditional_means(self, x) -> np.ndarray:
        return self.mean_gain * np.asarray(x, dtype=float)


def crem_slope_solve(input_vars, output_vars, d: float) -> CremSolution:
    """Gaussian CREM with inputs N(0, input_vars) and codewords N(0, output_vars)."""
    s = np.asarray(input_vars, dtype=float)
    nu = np.asarray(output_vars, dtype=float)
    if s.shape != nu.shape:
        raise DomainError("input and output variance vectors must have the same length")
    delta = float(solve_crem_slopes(s, nu, d)[0])
    scale = 1.0 + 2.0 * delta * nu
    value = -delta * d + float(np.mean(0.5 * np.log(scale))) + float(np.mean(delta * s / scale))
    return CremSolution(
        delta_star=delta, value=value,
        mean_gain=2.0 * delta * nu / scale, cond_vars=nu / scale,
        distortion=float(crem_distortion(s, nu, delta)),
    )


def proxy_variances(params: SourceParams, n: int, a_hat: float) -> np.ndarray:
    """sigma2 / (1 + a_hat^2 - 2 a_hat cos(i pi/(n+1))), i = 1..n."""
    if not abs(a_hat) < 1.0:
        raise DomainError(f"estimated gain must satisfy |a_hat| < 1, got {a_hat!r}")
    w = np.arange(1, int(n) + 1) * math.pi / (int(n) + 1)
    return params.sigma2 / (1.0 + a_hat * a_hat - 2.0 * a_hat * np.cos(w))


def conditional_distortions(output_vars, x, delta: float) -> np.ndarray:
    """m_i(x) = nu_i^2/(1+2 delta nu_i^2) + x_i^2/(1+2 delta nu_i^2)^2."""
    nu = np.asarray(output_vars, dtype=float)
    scale = 1.0 + 2.0 * delta * nu
    x = np.asarray(x, dtype=float)
    return nu / scale + x * x / (scale * scale)


def surrogate_distortions(spec: EigenSpectrum, theta_n: float, x) -> np.ndarray:
    """m_i evaluated at the exact slope 1/(2 theta_n) with the true variances."""
    s = np.asarray(spec.sigma_sq)
    m = np.minimum(s, theta_n)
    return m * m / s * (np.asarray(x, dtype=float) ** 2 / s - 1.0) + m


def eta_sequence(n: int, alpha: float) -> float:
    """eta_n = sqrt(alpha log log n / n), defined for n >= 3."""
    if n < 3:
        raise DomainError(f"eta_n needs n >= 3 so that log log n > 0, got n={n}")
    if alpha <= 0.0:
        raise DomainError(f"alpha must be positive, got {alpha!r}")
    return math.sqrt(alpha * math.log(math.log(n)) / n)


def moment_residuals(spec: EigenSpectrum, x) -> dict[int, float]:
    """|(1/n) sum (x_i^2/sigma_i^2)^k - (2k-1)!!| for k = 1, 2, 3."""
    r = np.asarray(x, dtype=float) ** 2 / np.asarray(spec.sigma_sq)
    return {k: abs(float(np.mean(r**k)) - double_factorial(2 * k - 1)) for k in (1, 2, 3)}


@dataclass(frozen=True)
class TypicalSetResult:
    member: bool
    eta_n: float
    p: float
    a_hat: float
    gain_error: float
    distortion_residual: float
    moment_residuals: dict
    slope: float

    @property
    def conditions(self) -> tuple[bool, bool, bool]:
        """Pass/fail of the gain, conditional-distortion, and moment conditions."""
        return (
            self.gain_error <= self.eta_n,
            self.distortion_residual <= self.p * self.eta_n,
            all(v <= 2.0 for v in self.moment_residuals.values()),
        )


def typical_set_member(
    params: SourceParams, dec: Decorrelator, d: float, alpha: float, p: float, u,
) -> TypicalSetResult:
    """Evaluate the three MLE-typical-set conditions for the block ``u``."""
    u = np.asarray(u, dtype=float)
    n = dec.n
    if u.shape != (n,):
        raise DomainError(f"block must have length n={n}, got shape {u.shape}")
    eta = eta_sequence(n, alpha)
    a_hat = mle_estimate(u)
    spec = dec.eigen
    x = decorrelate(dec, u)
    theta_n = nth_order_solve(spec, d).theta
    nu = output_variances(spec, theta_n)
    slope = math.nan
    dist_res = math.inf
    if abs(a_hat) < 1.0:
        s_hat = proxy_variances(params, n, a_hat)
        try:
            slope = float(solve_crem_slopes(s_hat, nu, d)[0])
        except DomainError:
            slope = math.nan
        if math.isfinite(slope):
            dist_res = abs(float(np.mean(conditional_distortions(nu, x, slope))) - d)
    moments = moment_residuals(spec, x)
    result = TypicalSetResult(
        member=False, eta_n=eta, p=float(p), a_hat=a_hat, gain_error=abs(a_hat - params.a),
        distortion_residual=dist_res, moment_residuals=moments, slope=slope,
    )
    return dataclasses.replace(result, member=all(result.conditions))


def typical_set_batch(
    params: SourceParams, dec: Decorrelator, d: float, alpha: float, p: float, blocks,
) -> tuple[np.ndarray, np.ndarray]:
    """Membership of each row of ``blocks``; also returns the per-condition pass matrix.

    Vectorized counterpart of :func:`typical_set_member`; rows whose gain
    estimate leaves (-1, 1) fail the conditional-distortion condition.
    """
    blocks = np.asarray(blocks, dtype=float)
    n = dec.n
    if blocks.ndim != 2 or blocks.shape[1] != n:
        raise DomainError(f"blocks must have shape (count, {n})")
    eta = eta_sequence(n, alpha)
    a_hat = mle_estimates(blocks)
    spec = dec.eigen
    x = decorrelate(dec, blocks)
    theta_n = nth_order_solve(spec, d).theta
    nu = output_variances(spec, theta_n)
    cond_gain = np.abs(a_hat - params.a) <= eta
    cond_dist = np.zeros(blocks.shape[0], dtype=bool)
    ok = np.abs(a_hat) < 1.0
    if np.any(ok):
        w = np.arange(1, n + 1) * math.pi / (n + 1)
        ah = a_hat[ok][:, None]
        s_hat = params.sigma2 / (1.0 + ah * ah - 2.0 * ah * np.cos(w))
        slopes = solve_crem_slopes(s_hat, nu, d)
        scale = 1.0 + 2.0 * slopes[:, None] * nu
        m = nu / scale + x[ok] ** 2 / (scale * scale)
        cond_dist[ok] = np.abs(m.mean(axis=1) - d) <= p * eta
    r = x * x / np.asarray(spec.sigma_sq)
    cond_mom = np.ones(blocks.shape[0], dtype=bool)
    for k in (1, 2, 3):
        cond_mom &= np.abs(np.mean(r**k, axis=1) - double_factorial(2 * k - 1)) <= 2.0
    conds = np.stack([cond_gain, cond_dist, cond_mom], axis=1)
    return conds.all(axis=1), conds


# --- Monte Carlo --------------------------------------------------------------


def sample_decorrelated(spec: EigenSpectrum, count: int, rng: RngStream) -> np.ndarray:
    """Independent N(0, sigma_i^2) coordinates, shape (count, n)."""
    return rng.standard_normal((int(count), spec.n)) * np.sqrt(spec.sigma_sq)


def _variance_stderr(values: np.ndarray) -> float:
    m = values.shape[0]
    c = values - values.mean()
    m2 = float(np.mean(c * c))
    m4 = float(np.mean(c**4))
    return math.sqrt(max(m4 - m2 * m2, 0.0) / m)


@dataclass(frozen=True)
class TiltedStats:
    n: int
    d: float
    theta_n: float
    mean_closed: float
    var_closed: float
    mc_mean: float
    mc_var: float
    mc_count: int
    mc_stderr: float
    mc_var_stderr: float
    v_limiting: float | None


def tilted_mc(spec: EigenSpectrum, d: float, trials: int, rng: RngStream, chunk: int = 1000, workers: int = 1) -> TiltedStats:
    """Closed-form and sampled mean/variance of j(X, d) at blocklength n."""
    if trials < 100:
        raise DomainError(f"tilted_mc needs at least 100 trials, got {trials}")
    theta = nth_order_solve(spec, d).theta
    s = np.asarray(spec.sigma_sq)
    mean_closed = float(np.sum(0.5 * np.maximum(0.0, np.log(s / theta))))
    var_closed = float(np.sum(0.5 * np.minimum(1.0, (s / theta) ** 2)))

    def draw(count, stream):
        return d_tilted_info(spec, theta, sample_decorrelated(spec, count, stream))

    vals = map_chunks(draw, trials, rng, chunk=chunk, workers=workers)
    params = spec.params
    v_lim = None
    if 0.0 < d < params.stationary_variance:
        v_lim = limiting_solve_from_d(params, d).dispersion
    return TiltedStats(
        n=spec.n, d=float(d), theta_n=theta, mean_closed=mean_closed, var_closed=var_closed,
        mc_mean=float(vals.mean()), mc_var=float(vals.var(ddof=1)), mc_count=int(trials),
        mc_stderr=float(vals.std(ddof=1) / math.sqrt(trials)), mc_var_stderr=_variance_stderr(vals),
        v_limiting=v_lim,
    )


@dataclass(frozen=True)
class GapStats:
    n: int
    d: float
    d_n: float
    theta: float
    theta_n: float
    mean: float
    var: float
    mean_stderr: float
    tail_u: float
    tail_freq: float
    trials: int


def tilted_gap_mc(
    spec: EigenSpectrum, d: float, trials: int, rng: RngStream, u: float = 0.1,
    chunk: int = 1000, workers: int = 1,
) -> GapStats:
    """Statistics of j(X, d) - j(X, d_n), with d_n the order-n distortion at the limiting theta."""
    if trials < 100:
        raise DomainError(f"tilted_gap_mc needs at least 100 trials, got {trials}")
    theta = limiting_solve_from_d(spec.params, d).theta
    d_n = nth_order_d_from_theta(spec, theta)
    theta_n = nth_order_solve(spec, d).theta

    def draw(count, stream):
        x = sample_decorrelated(spec, count, stream)
        return d_tilted_info(spec, theta_n, x) - d_tilted_info(spec, theta, x)

    vals = map_chunks(draw, trials, rng, chunk=chunk, workers=workers)
    return GapStats(
        n=spec.n, d=float(d), d_n=d_n, theta=theta, theta_n=theta_n,
        mean=float(vals.mean()), var=float(vals.var(ddof=1)),
        mean_stderr=float(vals.std(ddof=1) / math.sqrt(trials)),
        tail_u=float(u), tail_freq=float(np.mean(np.abs(vals) > u)), trials=int(trials),
    )
