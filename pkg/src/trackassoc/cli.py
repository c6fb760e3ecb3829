"""Experiment runner: sweeps the analytic curves against the Monte Carlo oracle.

Each experiment writes one CSV (columns: x, one column per analytic method,
then mc_p, mc_stderr when the oracle is requested). Output is byte-identical
for identical config + seed. The optional --plot flag renders the same columns
to a standalone SVG with no plotting dependency.

Exit codes: 0 success, 1 usage/config error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import dtmc as dtmc_mod
from . import mc_oracle, multi_fa, single_fa
from .geometry import ScanConfig
from .quadrature import IntegrationError

EXPERIMENTS = ("sweep-lambda", "sweep-n", "first-order", "random-lambda",
               "multi-fa", "dtmc", "oracle-compare")
METHOD_ORDER = ("exact", "closed-form", "first-order", "chi2", "normal", "exponential", "mc")

_DEFAULTS = dict(
    experiment="sweep-lambda",
    n_scans=40, dt=1.0, scan=0,                     # scan 0 means "last"
    lambda_min=1.0, lambda_max=4.0, lambda_step=0.1,
    lambda_fixed=2.0,
    n_min=10, n_max=80, n_step=5,
    k=2,
    sigma0=1.0,
    p_fa_min=0.01, p_fa_max=0.30, p_fa_step=0.01,
    steps=20,
    methods="",                                      # empty -> per-experiment default
    n_steps=10, support_k=3.0,
    trials=100_000, seed=42, jobs=1,
)

_INT_KEYS = {"n_scans", "scan", "n_min", "n_max", "n_step", "k", "steps",
             "n_steps", "trials", "seed", "jobs"}
_FLOAT_KEYS = {"dt", "lambda_min", "lambda_max", "lambda_step", "lambda_fixed",
               "sigma0", "p_fa_min", "p_fa_max", "p_fa_step", "support_k"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    n_scans: int
    dt: float
    scan: int
    lambda_min: float
    lambda_max: float
    lambda_step: float
    lambda_fixed: float
    n_min: int
    n_max: int
    n_step: int
    k: int
    sigma0: float
    p_fa_min: float
    p_fa_max: float
    p_fa_step: float
    steps: int
    methods: tuple = field(default=())
    n_steps: int = 10
    support_k: float = 3.0
    trials: int = 100_000
    seed: int = 42
    jobs: int = 1


_DEFAULT_METHODS = {
    "sweep-lambda": ("exact", "closed-form", "mc"),
    "sweep-n": ("exact", "closed-form", "mc"),
    "first-order": ("exact", "first-order"),
    "random-lambda": ("closed-form", "mc"),
    "multi-fa": ("chi2", "normal", "mc"),
    "dtmc": (),
    "oracle-compare": ("exact", "mc"),
}


def _validate(spec: ExperimentSpec) -> ExperimentSpec:
    if spec.experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {spec.experiment!r}")
    if not 5 <= spec.n_scans <= 200:
        raise ConfigError("n_scans must lie in [5, 200]")
    if not (5 <= spec.n_min <= spec.n_max <= 200):
        raise ConfigError("n grid must lie in [5, 200]")
    for v in (spec.lambda_min, spec.lambda_max, spec.lambda_fixed):
        if not 0.0 <= v <= 10.0:
            raise ConfigError("lambda values must lie in [0, 10]")
    if spec.lambda_max < spec.lambda_min or spec.lambda_step <= 0:
        raise ConfigError("bad lambda grid")
    if spec.n_step <= 0:
        raise ConfigError("bad n grid step")
    if not 1 <= spec.k < spec.n_scans:
        raise ConfigError("k must satisfy 1 <= k < n_scans")
    if not (0.0 <= spec.p_fa_min <= spec.p_fa_max < 1.0) or spec.p_fa_step <= 0:
        raise ConfigError("bad p_fa grid")
    if spec.trials < 1:
        raise ConfigError("trials must be >= 1")
    if spec.steps < 0:
        raise ConfigError("steps must be >= 0")
    if spec.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    methods = spec.methods or _DEFAULT_METHODS[spec.experiment]
    bad = [m for m in methods if m not in METHOD_ORDER]
    if bad:
        raise ConfigError(f"unknown methods: {bad}")
    if spec.experiment != "dtmc" and not methods:
        raise ConfigError("methods must not be empty")
    methods = tuple(m for m in METHOD_ORDER if m in methods)
    scan = spec.scan or spec.n_scans
    if not 1 <= scan <= spec.n_scans:
        raise ConfigError("scan must lie in 1..n_scans")
    return replace(spec, methods=methods, scan=scan)


def parse_config(path) -> ExperimentSpec:
    """Parse a key=value config file (# comments) into a validated spec."""
    values = dict(_DEFAULTS)
    text = Path(path).read_text()
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip().replace("-", "_"), val.strip()
        if key == "p_fa":                       # single value shorthand
            try:
                values["p_fa_min"] = values["p_fa_max"] = float(val)
            except ValueError as exc:
                raise ConfigError(f"{path}:{ln}: bad value for p_fa: {exc}") from exc
            continue
        if key not in values:
            raise ConfigError(f"{path}:{ln}: unknown key {key!r}")
        try:
            if key in _INT_KEYS:
                values[key] = int(val)
            elif key in _FLOAT_KEYS:
                values[key] = float(val)
            elif key == "methods":
                values[key] = ",".join(v.strip().replace("_", "-")
                                       for v in val.split(",") if v.strip())
            else:
                values[key] = val
        except ValueError as exc:
            raise ConfigError(f"{path}:{ln}: bad value for {key}: {exc}") from exc
    methods = tuple(m for m in values["methods"].split(",") if m) if values["methods"] else ()
    values["methods"] = methods
    try:
        return _validate(ExperimentSpec(**values))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def default_spec() -> ExperimentSpec:
    values = dict(_DEFAULTS)
    values["methods"] = ()
    return _validate(ExperimentSpec(**values))


def _grid(lo, hi, step):
    count = int(round((hi - lo) / step)) + 1
    return [round(lo + i * step, 10) for i in range(count) if lo + i * step <= hi + 1e-9]


def _fmt(x):
    return f"{x:.10g}"


def _single_row(spec, lam, n_scans, scan, approx, methods):
    config = ScanConfig(n_scans=n_scans, dt=spec.dt, lam=lam)
    row = {}
    if "exact" in methods:
        row["exact"] = single_fa.exact_probability(scan, config)
    if "closed-form" in methods:
        row["closed_form"] = single_fa.closed_form_probability(scan, config, approx).value
    if "first-order" in methods:
        row["first_order"] = single_fa.first_order_probability(scan, config, approx)
    if "mc" in methods:
        plan = mc_oracle.TrialPlan(trials=spec.trials, seed=spec.seed,
                                   config=config, scan=scan)
        est = mc_oracle.simulate_single_fa(plan)
        row["mc_p"], row["mc_stderr"] = est.p_hat, est.stderr
    return row


def _experiment_rows(spec: ExperimentSpec):
    """(header, rows) for the experiment; rows are lists of floats led by x."""
    approx = single_fa.fit_gammas(spec.n_steps, spec.support_k)
    methods = spec.methods

    def run_grid(xs, fn):
        if spec.jobs > 1:
            with ThreadPoolExecutor(max_workers=spec.jobs) as pool:
                results = list(pool.map(fn, xs))
        else:
            results = [fn(x) for x in xs]
        return results

    if spec.experiment in ("sweep-lambda", "oracle-compare"):
        xs = _grid(spec.lambda_min, spec.lambda_max, spec.lambda_step)
        rows = run_grid(xs, lambda lam: _single_row(
            spec, lam, spec.n_scans, spec.scan, approx, methods))
        header = ["lambda"]
    elif spec.experiment in ("sweep-n", "first-order"):
        xs = list(range(spec.n_min, spec.n_max + 1, spec.n_step))
        # an explicit scan below n_scans is held fixed across the sweep;
        # the default tracks the last scan of each grid point
        fixed_scan = spec.scan if spec.scan < spec.n_scans else None
        rows = run_grid(xs, lambda n: _single_row(
            spec, spec.lambda_fixed, n, min(fixed_scan, n) if fixed_scan else n,
            approx, methods))
        header = ["n_scans"]
    elif spec.experiment == "random-lambda":
        xs = _grid(spec.lambda_min, spec.lambda_max, spec.lambda_step)

        def row_fn(lam0):
            config = ScanConfig(n_scans=spec.n_scans, dt=spec.dt, lam=lam0)
            rl = single_fa.RandomLambda(lambda0=lam0, sigma0=spec.sigma0)
            row = {}
            if "closed-form" in methods:
                row["closed_form"] = single_fa.random_lambda_probability(
                    rl, spec.scan, config, approx)
            if "mc" in methods:
                plan = mc_oracle.TrialPlan(trials=spec.trials, seed=spec.seed,
                                           config=config, scan=spec.scan, random_lambda=rl)
                est = mc_oracle.simulate_single_fa(plan)
                row["mc_p"], row["mc_stderr"] = est.p_hat, est.stderr
            return row

        rows = run_grid(xs, row_fn)
        header = ["lambda0"]
    elif spec.experiment == "multi-fa":
        xs = _grid(spec.lambda_min, spec.lambda_max, spec.lambda_step)
        indices = tuple(range(spec.n_scans - spec.k + 1, spec.n_scans + 1))

        def row_fn(lam):
            config = ScanConfig(n_scans=spec.n_scans, dt=spec.dt)
            fa = multi_fa.FalseAssocSet(indices=indices, lambdas=(lam,) * spec.k)
            mp = multi_fa.moment_params(fa, config)
            row = {}
            if "chi2" in methods:
                row["chi2"] = multi_fa.prob_chi2(spec.k, mp)
            if "normal" in methods:
                row["normal"] = multi_fa.prob_normal(mp).value
            if "exponential" in methods:
                row["exponential"] = multi_fa.prob_exponential(mp, rate=1.0 / mp.v0).value
            if "mc" in methods:
                plan = mc_oracle.TrialPlan(trials=spec.trials, seed=spec.seed,
                                           config=config, fa=fa)
                est, _ = mc_oracle.simulate_multi_fa(plan)
                row["mc_p"], row["mc_stderr"] = est.p_hat, est.stderr
            return row

        rows = run_grid(xs, row_fn)
        header = ["lambda"]
    elif spec.experiment == "dtmc":
        xs = _grid(spec.p_fa_min, spec.p_fa_max, spec.p_fa_step)

        def row_fn(p):
            chain = dtmc_mod.AssocDTMC(p_fa=p)
            reach = dtmc_mod.reach_probability(chain, spec.steps)
            row = {
                "reach_spectral": reach.spectral,
                "reach_power": reach.value,
                "reach_expansion": reach.expansion,
                "pi4": float(dtmc_mod.stationary(chain)[3]) if 0 < p < 1 else p * p,
                "expected_visits": dtmc_mod.expected_transient_visits(
                    chain, (1.0, 0.0, 0.0)) if p > 0 else float("inf"),
            }
            return row

        rows = run_grid(xs, row_fn)
        header = ["p_fa"]
    else:  # pragma: no cover
        raise ConfigError(f"unhandled experiment {spec.experiment}")

    columns = []
    for key in ("exact", "closed_form", "first_order", "chi2", "normal", "exponential",
                "reach_spectral", "reach_power", "reach_expansion", "pi4",
                "expected_visits", "mc_p", "mc_stderr"):
        if rows and key in rows[0]:
            columns.append(key)
    header += columns
    table = [[x] + [rows[i][c] for c in columns] for i, x in enumerate(xs)]
    return header, table


def write_csv(path, header, table):
    lines = [",".join(header)]
    for row in table:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_svg(path, header, table):
    """Render the CSV columns as polylines in a standalone SVG (no deps)."""
    width, height, margin = 720, 480, 60
    xs = [row[0] for row in table]
    series = [(header[j], [row[j] for row in table]) for j in range(1, len(header))
              if header[j] != "mc_stderr"]
    ys_all = [v for _, ys in series for v in ys if np.isfinite(v)]
    if not xs or not ys_all:
        raise ValueError("nothing to plot")
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys_all), max(ys_all)
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1

    def px(x):
        return margin + (x - x0) / (x1 - x0) * (width - 2 * margin)

    def py(y):
        return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin)

    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
             f'y2="{height - margin}" stroke="black"/>',
             f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
             f'y2="{height - margin}" stroke="black"/>',
             f'<text x="{width // 2}" y="{height - 16}" font-size="13" '
             f'text-anchor="middle">{header[0]}</text>']
    for k, (name, ys) in enumerate(series):
        color = palette[k % len(palette)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys) if np.isfinite(y))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                     f'points="{pts}"/>')
        parts.append(f'<text x="{width - margin + 4}" y="{margin + 16 * k}" '
                     f'font-size="12" fill="{color}">{name}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def run(spec: ExperimentSpec, out_dir, plot: bool = False) -> int:
    """Execute one experiment; returns the process exit code."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{spec.experiment}.csv"
    try:
        header, table = _experiment_rows(spec)
    except (IntegrationError, RuntimeError, FloatingPointError) as exc:
        csv_path.write_text(f"# ERROR: {exc}\n")
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    write_csv(csv_path, header, table)
    print(f"wrote {csv_path} ({len(table)} rows)")
    if plot:
        svg_path = out / f"{spec.experiment}.svg"
        write_svg(svg_path, header, table)
        print(f"wrote {svg_path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="trackassoc",
        description="Correct-association probability experiments (analytic vs Monte Carlo).")
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, help="override the RNG seed")
    parser.add_argument("--trials", type=int, help="override the Monte Carlo trial count")
    parser.add_argument("--experiment", help="override the experiment name")
    parser.add_argument("--plot", action="store_true", help="also write an SVG plot")
    args = parser.parse_args(argv)

    try:
        spec = parse_config(args.config) if args.config else default_spec()
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.trials is not None:
            overrides["trials"] = args.trials
        if args.experiment is not None:
            overrides["experiment"] = args.experiment
            overrides["methods"] = ()
        if overrides:
            spec = _validate(replace(spec, **overrides))
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return run(spec, args.out, plot=args.plot)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
