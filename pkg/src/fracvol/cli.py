"""
Command-line front end.

Every command writes CSV whose first line is ``# fracvol <command> <config>``
with the fully resolved configuration, followed by a column header row.

Exit codes: 0 success / all checks pass, 1 a check failed, 2 usage, config
or output error.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import replace

import numpy as np

from fracvol.config import ConfigError, RunConfig, load_config
from fracvol.density import (
    ReturnDensitySpec,
    mixture_cdf,
    mixture_density,
    support_window,
)
from fracvol.fbm import FbmGrid
from fracvol.model import CouplingMode, simulate_market
from fracvol.risk import RiskQuery, risk_report
from fracvol.stats import leverage, martingale_check

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

SIMULATE_COLUMNS = ("path", "t", "sigma", "price", "z")
DENSITY_COLUMNS = ("r", "density", "cdf")
RISK_COLUMNS = ("lag", "var_model", "es_model", "var_lognormal", "es_lognormal")
LEVERAGE_COLUMNS = ("tau", "L", "stderr", "z", "L_normalized", "L_normalized_stderr")
MGCHECK_COLUMNS = (
    "mode", "weight", "estimate", "target", "stderr", "z", "passed",
    "refined", "dt", "horizon", "n_paths", "ess",
)


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


class _Table:
    def __init__(self, command: str, config: RunConfig, columns):
        self.buf = io.StringIO()
        self.buf.write(f"# fracvol {command} {config.header()}\n")
        self.writer = csv.writer(self.buf, lineterminator="\n")
        self.writer.writerow(columns)

    def row(self, *values):
        self.writer.writerow([_num(v) for v in values])

    def text(self) -> str:
        return self.buf.getvalue()


def _resolved(config: RunConfig, **defaults) -> RunConfig:
    changes = {k: v for k, v in defaults.items() if getattr(config, k) is None}
    return replace(config, **changes)


def cmd_simulate(config: RunConfig) -> tuple[str, int]:
    """Paths of ``(t, sigma, price, z)``; one row per path and grid point."""
    config = _resolved(config, n_paths=1, n_steps=100, dt=config.delta, mode="independent", r=0.0)
    params = config.model_params()
    grid = FbmGrid(config.n_steps, config.dt)
    table = _Table("simulate", config, SIMULATE_COLUMNS)
    if config.mode == "both":
        raise ConfigError("simulate takes a single mode")
    path = simulate_market(params, config.mode, grid, seed=config.seed, n_paths=config.n_paths)
    t = grid.times
    for p in range(config.n_paths):
        for i in range(grid.n_steps + 1):
            table.row(p, t[i], path.sigma[p, i], path.price[p, i], path.discounted[p, i])
    return table.text(), EXIT_OK


def cmd_density(config: RunConfig) -> tuple[str, int]:
    """Density and CDF of the ``lag``-day return on a uniform grid."""
    params = config.model_params()
    spec = ReturnDensitySpec(params, config.lag, config.quad_order, config.lag_scaled_vol)
    lo, hi = support_window(spec, 40.0)
    config = _resolved(config, r_min=lo, r_max=hi, r=params.riskfree)
    grid = np.linspace(config.r_min, config.r_max, config.n_points)
    dens = mixture_density(grid, spec)
    cdf = mixture_cdf(grid, spec)
    table = _Table("density", config, DENSITY_COLUMNS)
    for x, d, c in zip(grid, dens, cdf):
        table.row(x, d, c)
    ok = bool(np.all(dens >= 0) and np.all(np.diff(cdf) >= -1e-15))
    return table.text(), EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_risk(config: RunConfig) -> tuple[str, int]:
    """VaR and expected shortfall per lag for the model and the lognormal baseline."""
    config = _resolved(config, r=0.0)
    query = RiskQuery(
        config.model_params(),
        pstar=config.pstar,
        capital=config.s0,
        lags=config.lags,
        quad_order=config.quad_order,
        baseline_vol=config.baseline_vol,
        lag_scaled_vol=config.lag_scaled_vol,
    )
    report = risk_report(query)
    table = _Table("risk", config, RISK_COLUMNS)
    for row in report.rows:
        table.row(row.lag, row.var_model, row.es_model, row.var_lognormal, row.es_lognormal)
    return table.text(), EXIT_OK


def cmd_leverage(config: RunConfig) -> tuple[str, int]:
    """Leverage correlator of simulated per-step returns."""
    config = _resolved(config, n_paths=1000, n_steps=1000, dt=config.delta, mode="identified", r=0.0)
    if config.mode == "both":
        raise ConfigError("leverage takes a single mode")
    params = config.model_params()
    grid = FbmGrid(config.n_steps, config.dt)
    path = simulate_market(params, config.mode, grid, seed=config.seed, n_paths=config.n_paths)
    curve = leverage(path.log_returns, config.taus)
    table = _Table("leverage", config, LEVERAGE_COLUMNS)
    for i, tau in enumerate(curve.taus):
        table.row(
            int(tau), curve.values[i], curve.stderr[i], curve.z_scores[i],
            curve.normalized[i], curve.normalized_stderr[i],
        )
    return table.text(), EXIT_OK


def _mg_plan(config: RunConfig):
    plan = []
    for mode in config.modes("both"):
        plan.append((mode, "eta"))
        if mode is CouplingMode.INDEPENDENT:
            plan.append((mode, "eta_times_eta_prime"))
    return plan


def cmd_mgcheck(config: RunConfig) -> tuple[str, int]:
    """Weighted martingale checks of the discounted price; exit 1 on any failure."""
    config = _resolved(config, n_paths=100_000, n_steps=2, dt=config.delta / 8, mode="both", r=0.01)
    params = config.model_params()
    grid = FbmGrid(config.n_steps, config.dt)
    table = _Table("mgcheck", config, MGCHECK_COLUMNS)
    all_pass = True
    for idx, (mode, kind) in enumerate(_mg_plan(config)):
        res = martingale_check(
            params, mode, kind, n_paths=config.n_paths, grid=grid,
            seed=[config.seed, idx], threshold=config.threshold,
        )
        all_pass &= res.passed
        table.row(
            res.mode, res.weight_kind, res.estimate, res.target, res.stderr, res.z_score,
            res.passed, res.refined, res.dt, res.horizon, res.n_paths, res.ess,
        )
    return table.text(), EXIT_OK if all_pass else EXIT_CHECK_FAILED


COMMANDS = {
    "simulate": cmd_simulate,
    "density": cmd_density,
    "risk": cmd_risk,
    "leverage": cmd_leverage,
    "mgcheck": cmd_mgcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracvol", description="Fractional volatility model: simulation and risk."
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", metavar="PATH", help="key = value config file")
    parser.add_argument("--seed", type=int, help="random seed (overrides config)")
    parser.add_argument("--out", metavar="PATH", help="output CSV (default: stdout)")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override a config key; repeatable",
    )
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    try:
        config = load_config(args.config, overrides)
        text, code = COMMANDS[args.command](config)
    except (ConfigError, ValueError) as exc:
        print(f"fracvol: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"fracvol: cannot write {args.out}: {exc}", file=sys.stderr)
            return EXIT_USAGE
    else:
        sys.stdout.write(text)
    if code != EXIT_OK:
        print(f"fracvol: {args.command}: check failed", file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
