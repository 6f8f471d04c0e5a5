"""Command-line front end writing deterministic CSV.

    gmdispersion <command> [--a F --sigma2 F --d F --eps F --n N --n-list A,B,C
                            --trials N --seed N --alpha F --p F --eta F --c F
                            --config FILE --out PATH]

Values come from built-in defaults, then the optional JSON config file,
then explicit flags. Exit status: 0 ok, 2 usage or domain error, 3 numeric
non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Callable

import numpy as np

from .bounds import gaussian_approx_rate, geometric_converse_rate, iid_reference, random_code_sweep
from .eigen import exact_eigenvalues
from .errors import ConfigurationError, ConvergenceError, DomainError
from .estimator import DEFAULT_HW_CONSTANT, mle_error_experiment
from .source_model import SourceParams
from .stats_core import RngStream, q_inverse
from .tilted_crem import tilted_mc
from .waterfill import (
    critical_points, limiting_solve_from_d, limiting_solve_from_theta, nth_order_d_from_theta,
    nth_order_solve,
)

DEFAULTS = {
    "a": 0.5, "sigma2": 1.0, "d": 0.25, "eps": 0.1, "n": 100, "n_list": None, "d_list": None,
    "points": 20, "trials": 10000, "seed": None, "alpha": None, "p": 1.0, "eta": None,
    "c": DEFAULT_HW_CONSTANT, "m_max": 2**20, "workers": 1, "out": None,
}
STOCHASTIC = {"tilted-mc", "mle", "random-code"}


class UsageError(Exception):
    pass


def _int_list(text) -> list[int]:
    if isinstance(text, list):
        return [int(v) for v in text]
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from exc


def _float_list(text) -> list[float]:
    if isinstance(text, list):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def fmt(v) -> str:
    """Shortest round-trip decimal for floats; plain text otherwise."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def _params(cfg) -> SourceParams:
    return SourceParams(cfg["a"], cfg["sigma2"])


def _n_values(cfg) -> list[int]:
    return _int_list(cfg["n_list"]) if cfg["n_list"] is not None else [int(cfg["n"])]


def _d_grid(cfg, upper: float) -> list[float]:
    if cfg["d_list"] is not None:
        grid = _float_list(cfg["d_list"])
    else:
        k = int(cfg["points"])
        if k < 1:
            raise UsageError("--points must be at least 1")
        grid = [upper * (i + 1) / (k + 1) for i in range(k)]
    if not grid or any(not (0.0 < d < upper) for d in grid):
        raise UsageError(f"every grid distortion must lie in (0, {upper!r})")
    return grid


def cmd_rdf(cfg):
    params = _params(cfg)
    header = ["d", "rate_gm", "rate_iid", "theta"]
    rows = []
    for d in _d_grid(cfg, params.stationary_variance):
        pt = limiting_solve_from_d(params, d)
        rows.append([d, pt.rate, iid_reference(params, d)[0], pt.theta])
    return header, rows


def cmd_dispersion(cfg):
    params = _params(cfg)
    cp = critical_points(params)
    grid = _d_grid(cfg, cp.d_max)
    if cp.d_c < cp.d_max and cp.d_c not in grid:
        grid = sorted(grid + [cp.d_c])
    rows = []
    for d in grid:
        if d == cp.d_c:
            rows.append([cp.p1[0], cp.theta_min, limiting_solve_from_theta(params, cp.theta_min).dispersion])
        else:
            pt = limiting_solve_from_d(params, d)
            rows.append([d, pt.theta, pt.dispersion])
    # Vertical segment at d_max, parametrized by the water level.
    for k in range(9):
        theta = cp.theta_max * 2.0 ** (k / 4.0)
        pt = limiting_solve_from_theta(params, theta)
        rows.append([cp.d_max, theta, pt.dispersion])
    return ["d", "theta", "V"], rows


def cmd_nth_order(cfg):
    params = _params(cfg)
    d = float(cfg["d"])
    lim = limiting_solve_from_d(params, d)
    header = ["n", "d", "theta_n", "rate_n", "active_count", "theta", "rate", "d_n", "n_rate_gap", "n_d_gap"]
    rows = []
    for n in _n_values(cfg):
        spec = exact_eigenvalues(params, n)
        pt = nth_order_solve(spec, d)
        d_n = nth_order_d_from_theta(spec, lim.theta)
        rows.append([n, d, pt.theta, pt.rate, pt.active_count, lim.theta, lim.rate, d_n,
                     n * abs(pt.rate - lim.rate), n * abs(d - d_n)])
    return header, rows


def cmd_tilted_mc(cfg):
    params = _params(cfg)
    d = float(cfg["d"])
    rng = RngStream(int(cfg["seed"]))
    header = ["n", "d", "theta_n", "mean_closed", "var_closed", "mc_mean", "mc_var", "mc_stderr",
              "mc_var_stderr", "var_closed_per_n", "v_limiting", "trials"]
    rows = []
    for idx, n in enumerate(_n_values(cfg)):
        st = tilted_mc(exact_eigenvalues(params, n), d, int(cfg["trials"]), rng.substream(idx),
                       workers=int(cfg["workers"]))
        rows.append([n, d, st.theta_n, st.mean_closed, st.var_closed, st.mc_mean, st.mc_var,
                     st.mc_stderr, st.mc_var_stderr, st.var_closed / n, st.v_limiting, st.mc_count])
    return header, rows


def cmd_mle(cfg):
    params = _params(cfg)
    if (cfg["eta"] is None) == (cfg["alpha"] is None):
        raise UsageError("mle needs exactly one of --eta (fixed threshold) or --alpha (shrinking threshold)")
    reports = mle_error_experiment(
        params, _n_values(cfg), int(cfg["trials"]), RngStream(int(cfg["seed"])),
        eta=cfg["eta"], alpha=cfg["alpha"], c=float(cfg["c"]), workers=int(cfg["workers"]),
    )
    header = ["n", "mode", "eta", "trials", "exceed_count", "exceed_freq", "ci_low", "ci_high",
              "envelope", "c", "K1", "K2p", "K3p", "c1", "c2"]
    rows = []
    for r in reports:
        k = r.k_constants
        rows.append([r.n, r.mode, r.eta, r.trials, r.exceed_count, r.exceed_freq, r.ci_low, r.ci_high,
                     r.hw_bound, r.c, k.K1, k.K2p, k.K3p, k.c1, k.c2])
    return header, rows


def cmd_bounds(cfg):
    params = _params(cfg)
    d, eps = float(cfg["d"]), float(cfg["eps"])
    lim = limiting_solve_from_d(params, d)
    rate_iid, v_iid = iid_reference(params, d)
    header = ["n", "rate", "dispersion", "gaussian_approx", "geometric_converse", "iid_gaussian_approx"]
    rows = []
    for n in _n_values(cfg):
        rows.append([n, lim.rate, lim.dispersion, gaussian_approx_rate(params, d, eps, n),
                     geometric_converse_rate(params, d, eps, n),
                     rate_iid + math.sqrt(v_iid / n) * q_inverse(eps)])
    return header, rows


def cmd_eigen_check(cfg):
    params = _params(cfg)
    n = int(cfg["n"])
    spec = exact_eigenvalues(params, n)
    bound = 2.0 * params.a * math.pi / n
    rows = [[i + 1, float(spec.mu[i]), float(spec.xi[i]), float(spec.xi[i] - spec.mu[i]), bound] for i in range(n)]
    return ["i", "mu", "xi", "gap", "bound"], rows


def geometric_m_grid(m_max: int, steps_per_doubling: int = 4) -> list[int]:
    """Distinct integers round(2^(k/steps)) up to m_max."""
    grid, k = [], 0
    while True:
        m = int(round(2.0 ** (k / steps_per_doubling)))
        if m > m_max:
            return grid
        if not grid or m > grid[-1]:
            grid.append(m)
        k += 1


def cmd_random_code(cfg):
    params = _params(cfg)
    n, d, eps = int(cfg["n"]), float(cfg["d"]), float(cfg["eps"])
    spec = exact_eigenvalues(params, n)
    grid = geometric_m_grid(int(cfg["m_max"]))
    results = random_code_sweep(spec, d, grid, int(cfg["trials"]), RngStream(int(cfg["seed"])), stop_below=eps)
    rows = [[r.M, math.log(r.M) / n, r.eps_hat, r.ci_low, r.ci_high, r.trials] for r in results]
    return ["M", "rate", "eps_hat", "ci_low", "ci_high", "trials"], rows


COMMANDS: dict[str, Callable] = {
    "rdf": cmd_rdf,
    "dispersion": cmd_dispersion,
    "nth-order": cmd_nth_order,
    "tilted-mc": cmd_tilted_mc,
    "mle": cmd_mle,
    "bounds": cmd_bounds,
    "eigen-check": cmd_eigen_check,
    "random-code": cmd_random_code,
}


def render_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gmdispersion", description="Gauss-Markov rate-distortion curves and experiments.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="JSON file with option values (flags override it)")
    ap.add_argument("--a", type=float)
    ap.add_argument("--sigma2", type=float)
    ap.add_argument("--d", type=float)
    ap.add_argument("--eps", type=float)
    ap.add_argument("--n", type=int)
    ap.add_argument("--n-list", dest="n_list")
    ap.add_argument("--d-list", dest="d_list")
    ap.add_argument("--points", type=int)
    ap.add_argument("--trials", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--alpha", type=float)
    ap.add_argument("--p", type=float)
    ap.add_argument("--eta", type=float)
    ap.add_argument("--c", type=float)
    ap.add_argument("--m-max", dest="m_max", type=int)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--out")
    return ap


def resolve_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file {args.config!r}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        for key, val in loaded.items():
            k = key.replace("-", "_")
            if k not in cfg:
                raise UsageError(f"unknown config key {key!r}")
            cfg[k] = val
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if args.command in STOCHASTIC and cfg["seed"] is None:
        raise UsageError(f"command {args.command!r} is stochastic and requires --seed")
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        header, rows = COMMANDS[args.command](cfg)
    except (UsageError, DomainError, ConfigurationError) as exc:
        print(f"gmdispersion: error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"gmdispersion: numerical failure: {exc} {exc.diagnostics}", file=sys.stderr)
        return 3
    text = render_csv(header, rows)
    if cfg["out"]:
        with open(cfg["out"], "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
