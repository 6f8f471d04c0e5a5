"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line."""

import math
import subprocess
import sys
import time

import numpy as np

from gmdispersion.bounds import geometric_converse_rate, random_code_sweep
from gmdispersion.cli import geometric_m_grid
from gmdispersion.eigen import exact_eigenvalues, spectral_average, szego_sum
from gmdispersion.estimator import build_Q, frobenius_closed_form, mle_error_experiment, quadratic_identity_check, trace_closed_form
from gmdispersion.source_model import SourceParams
from gmdispersion.stats_core import RngStream, q_inverse
from gmdispersion.tilted_crem import (
    d_tilted_info, generalized_tilted_info, output_variances, sample_decorrelated, solve_crem_slopes,
    tilted_gap_mc, tilted_mc,
)
from gmdispersion.waterfill import (
    critical_points, limiting_solve_from_d, limiting_solve_from_theta, nth_order_solve,
)

HALF = SourceParams(0.5, 1.0)


def variation(values, floor):
    """max/min of a positive sequence; a sequence entirely at or below ``floor`` is identically zero."""
    values = np.abs(np.asarray(values, dtype=float))
    if np.all(values <= floor):
        return 1.0
    clipped = np.maximum(values, floor)
    return float(clipped.max() / clipped.min())


def test_c01_eigenvalue_sharpness(criterion):
    t0 = time.perf_counter()
    worst_low, worst_excess = 0.0, -math.inf
    for a in (0.1, 0.5, 0.9):
        for n in (2, 10, 100, 1000):
            spec = exact_eigenvalues(SourceParams(a), n)
            gap = spec.xi - spec.mu
            worst_low = min(worst_low, float(gap.min()))
            worst_excess = max(worst_excess, float(np.max(gap - 2 * a * math.pi / n)))
    elapsed = time.perf_counter() - t0
    ok = worst_low >= -1e-12 and worst_excess <= 1e-12 and elapsed < 5.0
    criterion(1, ok, f"min gap {worst_low:.2e}, max(gap - 2a pi/n) {worst_excess:.2e}, {elapsed:.2f}s")
    assert ok


def test_c02_szego_rate(criterion):
    t0 = time.perf_counter()
    ns = [16, 32, 64, 128, 256, 512, 1024]
    ratios = {}
    for d in (0.25, 1.0):
        theta = limiting_solve_from_d(HALF, d).theta
        funcs = {
            "min": lambda s, th=theta: np.minimum(th, s),
            "rate": lambda s, th=theta: np.maximum(0.0, 0.5 * np.log(s / th)),
        }
        for name, F in funcs.items():
            sums = [szego_sum(HALF, n, F, kinks=(theta,)) for n in ns]
            scaled = [n * s.gap for n, s in zip(ns, sums)]
            # resolution of n * gap: quadrature tolerance times the largest n
            floor = ns[-1] * 1e-12 * max(1.0, max(abs(s.integral) for s in sums))
            ratios[(d, name)] = variation(scaled, floor)
    elapsed = time.perf_counter() - t0
    ok = all(r < 4.0 for r in ratios.values()) and elapsed < 10.0
    detail = ", ".join(f"d={d} {k}: {r:.3f}" for (d, k), r in ratios.items())
    criterion(2, ok, f"n*gap variation ({detail}; d=0.25 gaps vanish analytically), {elapsed:.2f}s")
    assert ok


def test_c03_corner_points(criterion):
    cp = critical_points(HALF)
    lo = limiting_solve_from_theta(HALF, cp.theta_min)
    hi = limiting_solve_from_theta(HALF, cp.theta_max)
    errs = [
        abs(cp.p1[0] - 4 / 9), abs(cp.p1[1] - 0.5), abs(cp.p2[0] - 4 / 3), abs(cp.p2[1] - 5 / 54),
        abs(lo.d - cp.p1[0]), abs(lo.dispersion - cp.p1[1]),
        abs(hi.d - cp.p2[0]), abs(hi.dispersion - cp.p2[1]),
        abs(spectral_average(HALF, lambda s: s) - 4 / 3),
        abs(spectral_average(HALF, lambda s: s * s) - 1.25 / 0.75**3),
    ]
    ok = max(errs) <= 1e-9
    criterion(3, ok, f"P1={cp.p1}, P2=({cp.p2[0]:.12g}, {cp.p2[1]:.12g}), max error {max(errs):.2e}")
    assert ok


def test_c04_dispersion_plateau(criterion):
    dc = critical_points(HALF).d_c
    plateau = [limiting_solve_from_d(HALF, d).dispersion for d in np.linspace(dc / 10, dc, 10)]
    drop = [limiting_solve_from_d(HALF, d).dispersion for d in np.linspace(dc, HALF.sigma2, 12)[1:-1]]
    dev = max(abs(v - 0.5) for v in plateau)
    ok = dev <= 1e-10 and all(v < 0.5 for v in drop) and len(drop) == 10
    criterion(4, ok, f"plateau |V-0.5| <= {dev:.2e}; max V above d_c {max(drop):.6f}")
    assert ok


def test_c05_tilted_moments(criterion):
    t0 = time.perf_counter()
    n, d = 512, 0.25
    spec = exact_eigenvalues(HALF, n)
    st = tilted_mc(spec, d, 10_000, RngStream(2024))
    rate_n = nth_order_solve(spec, d).rate
    mean_z = abs(st.mc_mean / n - rate_n) / (st.mc_stderr / n)
    var_z = abs(st.mc_var - st.var_closed) / st.mc_var_stderr
    closed_gap = abs(st.var_closed / n - st.v_limiting)
    elapsed = time.perf_counter() - t0
    ok = mean_z <= 3 and var_z <= 3 and closed_gap <= 0.02 and elapsed < 30
    criterion(5, ok, f"mean {mean_z:.2f} SE, variance {var_z:.2f} SE, |V_n - V| {closed_gap:.2e}, {elapsed:.2f}s")
    assert ok


def test_c06_identity_chain(criterion):
    n = 64
    worst = 0.0
    for d in (0.25, 1.0):
        spec = exact_eigenvalues(HALF, n)
        theta = nth_order_solve(spec, d).theta
        x = sample_decorrelated(spec, 100, RngStream(6, int(d * 100)))
        j = d_tilted_info(spec, theta, x)
        lam = generalized_tilted_info(output_variances(spec, theta), x, 1.0 / (2.0 * theta), d)
        worst = max(worst, float(np.max(np.abs(j - lam))))
    ok = worst <= 1e-10
    criterion(6, ok, f"max |j - Lambda| {worst:.2e} over 2 x 100 draws")
    assert ok


def test_c07_crem_slope(criterion):
    slope_err = 0.0
    worst = (0.0, None)
    for a in (0.0, 0.5, 0.9):
        params = SourceParams(a)
        for d in (0.1, 0.5, 1.0):
            if d >= params.stationary_variance:
                continue
            theta = limiting_solve_from_d(params, d).theta
            for n in (64, 256):
                spec = exact_eigenvalues(params, n)
                theta_n = nth_order_solve(spec, d).theta
                nu = output_variances(spec, theta_n)
                lam = 1.0 / (2.0 * theta_n)
                slope_err = max(slope_err, abs(float(solve_crem_slopes(spec.sigma_sq, nu, d)[0]) - lam))
                for t in (theta / 10, theta / 5):
                    for sign in (1.0, -1.0):
                        s_hat = np.maximum(spec.sigma_sq + sign * t, 0.0)
                        delta = float(solve_crem_slopes(s_hat, nu, d)[0])
                        ratio = abs(delta - lam) / (9 * t / (4 * theta**2))
                        if ratio > worst[0]:
                            worst = (ratio, (a, d, n, round(t / theta, 2), sign))
    ok = slope_err <= 1e-9 and worst[0] <= 1.0
    criterion(7, ok, f"unperturbed slope error {slope_err:.2e}; worst |delta-lambda|/(9t/4theta^2) "
                     f"= {worst[0]:.3f} at (a, d, n, t/theta, sign) = {worst[1]}")
    assert ok


def test_c08_quadratic_form(criterion):
    tr_err = fr_err = 0.0
    for a in (0.0, 0.5, 0.9):
        for eta in (0.05, 0.1, 0.2):
            for n in (10, 100, 1000):
                params = SourceParams(a, 1.5)
                Q = build_Q(params, n, eta)
                tc = trace_closed_form(params, n, eta)
                tr_err = max(tr_err, abs(params.sigma2 * Q.trace - params.sigma2 * tc) / abs(params.sigma2 * tc))
                fc = frobenius_closed_form(params, n, eta)
                fr_err = max(fr_err, abs(Q.frob_sq - fc) / fc)
    ident = max(quadratic_identity_check(SourceParams(a, 1.5), 100, 0.1, RngStream(8), 10_000) for a in (0.0, 0.5, 0.9))
    ok = tr_err <= 1e-12 and fr_err <= 1e-9 and ident <= 1e-9
    criterion(8, ok, f"trace rel err {tr_err:.2e}, Frobenius rel err {fr_err:.2e}, identity rel err {ident:.2e}")
    assert ok


def test_c09_mle_decay(criterion):
    t0 = time.perf_counter()
    reps = mle_error_experiment(HALF, [500, 2000], 10_000, RngStream(9), eta=0.1)
    f500, f2000 = reps[0].exceed_freq, reps[1].exceed_freq
    elapsed = time.perf_counter() - t0
    ok = f2000 < f500 and f2000 < 0.05 and elapsed < 60
    criterion(9, ok, f"P[|a_hat-a|>0.1]: n=500 {f500:.4f}, n=2000 {f2000:.4f}, {elapsed:.2f}s")
    assert ok


def test_c10_tilted_gap(criterion):
    ns = [64, 128, 256, 512, 1024]
    stats = [tilted_gap_mc(exact_eigenvalues(HALF, n), 0.25, 10_000, RngStream(10, n)) for n in ns]
    n_mean = [n * abs(s.mean) for n, s in zip(ns, stats)]
    n_var = [n * s.var for n, s in zip(ns, stats)]
    floor = 1e-9
    r_mean, r_var = variation(n_mean, floor), variation(n_var, floor)
    ok = r_mean < 4 and r_var < 4
    criterion(10, ok, f"n|mean| {max(n_mean):.2e} max (variation {r_mean:.2f}), "
                      f"n Var {max(n_var):.2e} max (variation {r_var:.2f}); d=0.25 < d_c so theta_n = theta")
    assert ok


def test_c11_converse_consistency(criterion):
    target = q_inverse(0.1) / math.sqrt(2.0)
    n = 10_000
    val = math.sqrt(n) * (geometric_converse_rate(SourceParams(0.0), 0.25, 0.1, n) - 0.5 * math.log(4.0))
    rel = abs(val - target) / target
    ok = rel <= 0.02
    criterion(11, ok, f"sqrt(n)[r(n) - R] = {val:.5f} vs {target:.5f} (rel {rel:.4f}) at n=1e4")
    assert ok


def test_c12_sandwich(criterion):
    n, d = 8, 0.25
    spec = exact_eigenvalues(SourceParams(0.0), n)
    grid = geometric_m_grid(2**20)
    res = random_code_sweep(spec, d, grid, 1000, RngStream(12), stop_below=0.1)
    hit = res[-1]
    rate = math.log(hit.M) / n
    conv = geometric_converse_rate(SourceParams(0.0), d, 0.1, n)
    ok = hit.eps_hat <= 0.1 and conv <= rate <= conv + 0.35
    criterion(12, ok, f"M={hit.M} (eps_hat {hit.eps_hat:.3f}) rate {rate:.4f}, converse {conv:.4f}, slack {rate - conv:.4f}")
    assert ok


def test_c13_determinism(criterion):
    commands = [
        ["tilted-mc", "--n", "64", "--trials", "2000", "--seed", "13"],
        ["mle", "--n-list", "100,200", "--eta", "0.1", "--trials", "2000", "--seed", "13"],
        ["random-code", "--a", "0", "--n", "4", "--d", "0.5", "--trials", "1000", "--m-max", "256", "--seed", "13"],
    ]
    same = []
    for argv in commands:
        runs = [
            subprocess.run([sys.executable, "-m", "gmdispersion", *argv], capture_output=True, check=True).stdout
            for _ in range(2)
        ]
        same.append(runs[0] == runs[1] and len(runs[0]) > 0)
    ok = all(same)
    criterion(13, ok, f"byte-identical reruns: {dict(zip((c[0] for c in commands), same))}")
    assert ok
