import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmdispersion.eigen import exact_eigenvalues, kink_angle, spectrum_extrema
from gmdispersion.errors import DomainError
from gmdispersion.source_model import SourceParams
from gmdispersion.waterfill import (
    critical_points, limiting_dispersion, limiting_distortion, limiting_rate, limiting_solve_from_d,
    limiting_solve_from_theta, nth_order_d_from_theta, nth_order_rate_from_theta, nth_order_solve,
    solve_theta,
)

# Order-2 values at a = 0.5 from the 40-digit roots of mu^2 - 2.25 mu + 1.
N2_RATE_AT_HALF = 0.34657359027997265471  # 1/2 log 2 since prod sigma_i^2 = 1
N2_THETA_AT_ONE = 1.3903882032022075687
N2_RATE_AT_ONE = 0.041337483016211023223
P2_DISPERSION_HALF = 0.092592592592592592593  # 5/54


def arctan_distortion(params, theta):
    """d(theta) from the antiderivative of sigma2/g(w)."""
    a, s2 = params.a, params.sigma2
    lo, hi = spectrum_extrema(params)
    if theta <= lo:
        return theta
    if theta >= hi:
        return s2 / (1 - a * a)
    w0 = kink_angle(params, theta)
    k = (1 + a) / (1 - a)
    antider = lambda w: 2 * s2 / (1 - a * a) * math.atan(k * math.tan(w / 2))
    tail = 2 * s2 / (1 - a * a) * (math.pi / 2) - antider(w0)
    return (theta * w0 + tail) / math.pi


def gauss_legendre_average(params, F, theta, order=200):
    """(1/pi) int_0^pi F(S(w)) dw by fixed Gauss-Legendre on each smooth piece."""
    x, wts = np.polynomial.legendre.leggauss(order)
    w0 = kink_angle(params, theta)
    edges = [0.0, math.pi] if w0 is None else [0.0, w0, math.pi]
    total = 0.0
    for lo, hi in zip(edges, edges[1:]):
        w = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        s = params.sigma2 / (1 + params.a**2 - 2 * params.a * np.cos(w))
        total += 0.5 * (hi - lo) * float(np.sum(wts * F(s)))
    return total / math.pi


@pytest.mark.parametrize("a", [0.1, 0.5, 0.9])
@pytest.mark.parametrize("frac", [0.05, 0.3, 0.6, 0.95])
def test_distortion_matches_arctan_closed_form(a, frac):
    params = SourceParams(a)
    lo, hi = spectrum_extrema(params)
    theta = lo + frac * (hi - lo)
    assert limiting_distortion(params, theta) == pytest.approx(arctan_distortion(params, theta), rel=1e-11)


@pytest.mark.parametrize("a", [0.2, 0.5, 0.9])
@pytest.mark.parametrize("frac", [0.1, 0.5, 0.9])
def test_rate_and_dispersion_match_gauss_legendre(a, frac):
    params = SourceParams(a, 1.7)
    lo, hi = spectrum_extrema(params)
    theta = lo + frac * (hi - lo)
    r = gauss_legendre_average(params, lambda s: np.maximum(0.0, 0.5 * np.log(s / theta)), theta)
    v = 0.5 * gauss_legendre_average(params, lambda s: np.minimum(1.0, (s / theta) ** 2), theta)
    assert limiting_rate(params, theta) == pytest.approx(r, rel=1e-10, abs=1e-13)
    assert limiting_dispersion(params, theta) == pytest.approx(v, rel=1e-10)


def test_critical_points_half():
    cp = critical_points(SourceParams(0.5))
    assert cp.p1 == (pytest.approx(4.0 / 9.0, abs=1e-15), 0.5)
    assert cp.p2[0] == pytest.approx(4.0 / 3.0, abs=1e-15)
    assert cp.p2[1] == pytest.approx(P2_DISPERSION_HALF, abs=1e-15)


@pytest.mark.parametrize("a", [0.1, 0.5, 0.9])
def test_corner_points_against_quadrature(a):
    params = SourceParams(a)
    cp = critical_points(params)
    at_min = limiting_solve_from_theta(params, cp.theta_min)
    assert at_min.d == pytest.approx(cp.d_c, abs=1e-12)
    assert at_min.dispersion == pytest.approx(0.5, abs=1e-10)
    assert at_min.rate == pytest.approx(math.log(1 + a), abs=1e-10)
    at_max = limiting_solve_from_theta(params, cp.theta_max)
    assert at_max.d == pytest.approx(cp.d_max, abs=1e-12)
    assert at_max.rate == 0.0
    assert at_max.dispersion == pytest.approx(cp.p2[1], abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 0.95), st.floats(0.01, 0.99))
def test_low_distortion_matches_innovation(a, frac):
    params = SourceParams(a, 1.0)
    d = frac * critical_points(params).d_c
    pt = limiting_solve_from_d(params, d)
    assert pt.theta == d
    assert pt.rate == pytest.approx(0.5 * math.log(1.0 / d), abs=1e-10)
    assert pt.dispersion == pytest.approx(0.5, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.001, 0.999))
def test_solve_theta_round_trip(a, frac):
    params = SourceParams(a)
    d = frac * params.stationary_variance
    theta = solve_theta(params, d)
    assert limiting_distortion(params, theta) == pytest.approx(d, rel=1e-10, abs=1e-12)


def test_rate_and_dispersion_monotone():
    params = SourceParams(0.5)
    ds = np.linspace(0.05, 1.3, 30)
    pts = [limiting_solve_from_d(params, d) for d in ds]
    rates = [p.rate for p in pts]
    disps = [p.dispersion for p in pts]
    assert all(b < a for a, b in zip(rates, rates[1:]))
    assert all(b <= a + 1e-12 for a, b in zip(disps, disps[1:]))


def test_dispersion_plateau_then_drop():
    params = SourceParams(0.5)
    dc = critical_points(params).d_c
    for d in np.linspace(dc / 10, dc, 10):
        assert abs(limiting_solve_from_d(params, d).dispersion - 0.5) <= 1e-10
    for d in np.linspace(dc, 1.0, 11)[1:]:
        assert limiting_solve_from_d(params, d).dispersion < 0.5


@pytest.mark.parametrize("d", [0.0, -0.1, 4.0 / 3.0, 2.0])
def test_solve_theta_domain(d):
    with pytest.raises(DomainError, match="d_max"):
        solve_theta(SourceParams(0.5), d)


def test_limiting_solve_from_theta_domain():
    with pytest.raises(DomainError):
        limiting_solve_from_theta(SourceParams(0.5), 0.0)


def test_nth_order_two_by_two_examples():
    spec = exact_eigenvalues(SourceParams(0.5), 2)
    low = nth_order_solve(spec, 0.5)
    assert low.theta == pytest.approx(0.5, abs=1e-15)
    assert low.rate == pytest.approx(N2_RATE_AT_HALF, abs=1e-14)
    assert low.active_count == 2
    high = nth_order_solve(spec, 1.0)
    assert high.theta == pytest.approx(N2_THETA_AT_ONE, abs=1e-13)
    assert high.rate == pytest.approx(N2_RATE_AT_ONE, abs=1e-13)
    assert high.active_count == 1


def brute_force_theta(spec, d):
    lo, hi = 0.0, float(spec.sigma_sq.max())
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.mean(np.minimum(mid, spec.sigma_sq)) < d:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.95), st.integers(1, 200), st.floats(0.001, 0.999))
def test_nth_order_solve_matches_bisection(a, n, frac):
    spec = exact_eigenvalues(SourceParams(a, 1.3), n)
    d = frac * spec.mean_variance
    pt = nth_order_solve(spec, d)
    assert pt.theta == pytest.approx(brute_force_theta(spec, d), rel=1e-12)
    assert nth_order_d_from_theta(spec, pt.theta) == pytest.approx(d, rel=1e-12)
    assert pt.rate == pytest.approx(nth_order_rate_from_theta(spec, pt.theta), rel=1e-12, abs=1e-15)
    assert pt.active_count == int(np.sum(spec.sigma_sq > pt.theta))


def test_nth_order_domain():
    spec = exact_eigenvalues(SourceParams(0.5), 4)
    with pytest.raises(DomainError):
        nth_order_solve(spec, spec.mean_variance)
    with pytest.raises(DomainError):
        nth_order_solve(spec, 0.0)
    with pytest.raises(DomainError):
        nth_order_d_from_theta(spec, -1.0)


def test_nth_order_converges_to_limit():
    params = SourceParams(0.5)
    lim = limiting_solve_from_d(params, 0.8)
    gaps = []
    for n in (32, 128, 512):
        pt = nth_order_solve(exact_eigenvalues(params, n), 0.8)
        gaps.append(abs(pt.rate - lim.rate) + abs(pt.theta - lim.theta))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-2
