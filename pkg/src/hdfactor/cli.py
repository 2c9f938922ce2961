"""Command-line interface.

Subcommands wire ingestion, estimation, diagnostics and the Monte Carlo
studies into reproducible batch runs.  No plots are rendered: every
figure-shaped result is written as a CSV that any plotting tool can
consume.  Exit codes separate failure classes so scripts can branch:
0 success, 1 estimation/domain error, 2 I/O or parse error, 3 bad flags.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import cross_acf, projection_residual_ratio, residual_projection_acf, variance_explained
from .errors import DimensionError, DomainError, HDFactorError, ParseError
from .estimation import DEFAULT_K0, estimate, two_step_estimate
from .panel import Panel, SeasonalSpec, load_csv, save_csv, seasonal_demean
from .serialize import acf_rows, dump_json, fmt_float, load_config, model_to_dict, write_csv
from .simulation import (
    GENERATOR_ID,
    Scenario,
    eigen_error_study,
    fit_error_slopes,
    ratio_trace_study,
    run_table1,
    two_step_study,
)

ORIENTATION_FLAGS = {"time-rows": "rows-are-time", "series-rows": "rows-are-series"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(3)


def _add_panel_flags(sub):
    sub.add_argument("input", help="panel CSV file")
    sub.add_argument("--orientation", choices=sorted(ORIENTATION_FLAGS), default="time-rows")
    sub.add_argument("--seasonal-period", type=int, default=None,
                     help="remove per-season means before fitting (e.g. 12 for monthly data)")
    sub.add_argument("--k0", type=int, default=DEFAULT_K0, help="largest autocovariance lag pooled")
    sub.add_argument("--max-ratio-index", type=int, default=None,
                     help="largest index searched by the ratio rule (default p/2)")
    sub.add_argument("--appendix-centering", action="store_true",
                     help="center each lag window by its own mean instead of the full-sample mean")
    sub.add_argument("--out", default=".", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hdfactor", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hdfactor {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    est = commands.add_parser("estimate", help="fit the one-step factor model to a panel")
    _add_panel_flags(est)
    est.add_argument("--dump-loadings", action="store_true", help="also write loadings.csv")
    est.add_argument("--dump-factors", action="store_true", help="also write factors.csv")
    est.set_defaults(func=cmd_estimate)

    two = commands.add_parser("two-step", help="fit the two-step model for mixed-strength factors")
    _add_panel_flags(two)
    two.add_argument("--r1", type=int, default=None, help="override the first-pass factor count")
    two.add_argument("--dump-loadings", action="store_true")
    two.add_argument("--dump-factors", action="store_true")
    two.set_defaults(func=cmd_two_step)

    diag = commands.add_parser("diagnose", help="fit, then run whiteness and variance diagnostics")
    _add_panel_flags(diag)
    diag.add_argument("--two-step", action="store_true", help="diagnose the two-step fit")
    diag.add_argument("--max-lag", type=int, default=20)
    diag.add_argument("--directions", default=None,
                      help="comma-separated eigen indices (> r_hat) for residual projections")
    diag.add_argument("--project", default=None, metavar="FILE",
                      help="one-series CSV to project onto the factor-series span")
    diag.set_defaults(func=cmd_diagnose)

    sim = commands.add_parser("simulate", help="run a Monte Carlo study from a scenario file")
    sim.add_argument("--scenario", required=True, help="scenario file (JSON or key = value lines)")
    sim.add_argument("--reps", type=int, default=None, help="override replication count")
    sim.add_argument("--seed", type=int, default=None, help="override the base seed")
    sim.add_argument("--out", default=".")
    sim.set_defaults(func=cmd_simulate)

    rates = commands.add_parser("rates", help="empirical convergence-rate study with slope fits")
    rates.add_argument("--scenario", required=True)
    rates.add_argument("--reps", type=int, default=None)
    rates.add_argument("--seed", type=int, default=None)
    rates.add_argument("--out", default=".")
    rates.set_defaults(func=cmd_rates)
    return parser


def _load_panel(args):
    panel = load_csv(args.input, ORIENTATION_FLAGS[args.orientation])
    if args.seasonal_period is not None:
        panel = seasonal_demean(panel, SeasonalSpec(args.seasonal_period))
    return panel


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_trace_csvs(out: Path, model, suffix1: str = "", suffix2: str = None):
    write_csv(
        out / f"eigenvalues{suffix1}.csv",
        ["index", "lambda"],
        [(i + 1, v) for i, v in enumerate(model.eigenvalues)],
    )
    write_csv(
        out / f"ratios{suffix1}.csv",
        ["index", "ratio"],
        [(i + 1, v) for i, v in enumerate(model.ratios)],
    )
    if suffix2 is not None:
        write_csv(
            out / f"eigenvalues{suffix2}.csv",
            ["index", "lambda"],
            [(i + 1, v) for i, v in enumerate(model.eigenvalues_step2)],
        )
        write_csv(
            out / f"ratios{suffix2}.csv",
            ["index", "ratio"],
            [(i + 1, v) for i, v in enumerate(model.ratios_step2)],
        )


def _print_fit(model):
    print(f"r_hat = {model.r_hat} ({model.method}, k0={model.k0}, R={model.ratio_span})")
    if model.method == "two-step":
        print(f"r1_hat = {model.r1_hat}, r2_hat = {model.r2_hat}"
              + (" (second pass shows no sharp minimum)" if model.step2_no_sharp_minimum else ""))
    shown = [f"{i + 1}:{fmt_float(v)[:8]}" for i, v in enumerate(model.ratios[:8])]
    print("leading eigenvalue ratios:", "  ".join(shown))


def _dump_matrices(args, out: Path, panel, model):
    if getattr(args, "dump_loadings", False):
        save_csv(Panel(model.loadings, series_labels=panel.series_labels), out / "loadings.csv",
                 "rows-are-series")
    if getattr(args, "dump_factors", False):
        save_csv(Panel(model.factors, time_labels=panel.time_labels), out / "factors.csv",
                 "rows-are-time")


def cmd_estimate(args) -> int:
    panel = _load_panel(args)
    model = estimate(panel, args.k0, args.max_ratio_index,
                     window_centering=args.appendix_centering)
    out = _out_dir(args)
    dump_json(out / "model.json", model_to_dict(model))
    _write_trace_csvs(out, model)
    _dump_matrices(args, out, panel, model)
    _print_fit(model)
    return 0


def cmd_two_step(args) -> int:
    panel = _load_panel(args)
    model = two_step_estimate(panel, args.k0, args.max_ratio_index, args.r1,
                              window_centering=args.appendix_centering)
    out = _out_dir(args)
    dump_json(out / "model.json", model_to_dict(model))
    _write_trace_csvs(out, model, "_pass1", "_pass2")
    _dump_matrices(args, out, panel, model)
    _print_fit(model)
    return 0


def cmd_diagnose(args) -> int:
    panel = _load_panel(args)
    fit = two_step_estimate if args.two_step else estimate
    model = fit(panel, args.k0, args.max_ratio_index,
                window_centering=args.appendix_centering)
    out = _out_dir(args)

    factor_acf = cross_acf(model.factors, args.max_lag,
                           series_ids=[f"factor{i + 1}" for i in range(model.r_hat)])
    write_csv(out / "acf.csv", ["i", "j", "lag", "value", "band"], acf_rows(factor_acf))

    shares = variance_explained(model, panel)
    write_csv(out / "variance_explained.csv", ["factor", "fraction"],
              [(i + 1, v) for i, v in enumerate(shares)])
    print("variance explained:", " ".join(fmt_float(v) for v in shares))

    extras = {"variance_explained": [float(v) for v in shares]}
    if args.directions:
        directions = [int(d) for d in str(args.directions).split(",") if d.strip()]
        residual_acf = residual_projection_acf(model, panel, directions, args.max_lag)
        write_csv(out / "residual_acf.csv", ["i", "j", "lag", "value", "band"],
                  acf_rows(residual_acf))
    if args.project:
        series = load_csv(args.project, ORIENTATION_FLAGS[args.orientation])
        if series.p != 1:
            raise DomainError(f"projection input must hold one series, got {series.p}")
        ratio = projection_residual_ratio(series.values[0], model.factors)
        extras["projection_residual_ratio"] = ratio
        print(fmt_float(ratio))
    dump_json(out / "model.json", model_to_dict(model, extras=extras))
    return 0


def _metadata(seed) -> dict:
    return {
        "generator": GENERATOR_ID,
        "package": f"hdfactor {__version__}",
        "base_seed": int(seed),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }


def _as_list(value):
    return value if isinstance(value, list) else [value]


def _scenario_from_config(config: dict, seed) -> Scenario:
    required = [key for key in ("n", "p", "r") if key not in config]
    if required:
        raise ParseError(f"scenario file is missing keys: {', '.join(required)}")
    r = int(config["r"])
    deltas = [float(d) for d in _as_list(config.get("deltas", 0.0))]
    if len(deltas) == 1:
        deltas *= r
    ar = [float(a) for a in _as_list(config.get("ar_coeffs", 0.5))]
    if len(ar) == 1:
        ar *= r
    return Scenario(
        n=int(config["n"]),
        p=int(config["p"]),
        r=r,
        deltas=tuple(deltas),
        ar_coeffs=tuple(ar),
        noise_var=float(config.get("noise_var", 1.0)),
        k0=int(config.get("k0", 1)),
        loading_scheme=str(config.get("loading_scheme", "uniform-scaled")),
        seed=int(seed),
    )


def cmd_simulate(args) -> int:
    config = load_config(args.scenario)
    study = str(config.get("study", "")).strip()
    scenario_id = str(config.get("id", Path(args.scenario).stem))
    reps = int(args.reps if args.reps is not None else config.get("reps", 200))
    seed = int(args.seed if args.seed is not None else config.get("seed", 0))
    out = _out_dir(args)
    doc = {"id": scenario_id, "study": study, "reps": reps, "metadata": _metadata(seed)}

    if study == "table1":
        cells = run_table1(
            deltas=[float(d) for d in _as_list(config.get("deltas", [0.0]))],
            n_grid=[int(n) for n in _as_list(config["n_grid"])],
            p_rules=[float(c) for c in _as_list(config["p_rules"])],
            reps=reps,
            base_seed=seed,
            r=int(config.get("r", 3)),
            ar_coeffs=[float(a) for a in _as_list(config.get("ar_coeffs", [0.6, -0.5, 0.3]))],
            noise_var=float(config.get("noise_var", 1.0)),
            k0=int(config.get("k0", 1)),
        )
        doc["cells"] = [
            {
                "delta": delta, "n": n, "p": p, "p_rule": rule,
                "freq_correct": res.freq_correct,
                "r_hat_counts": {str(k): v for k, v in res.r_hat_counts.items()},
            }
            for delta, n, p, rule, res in cells
        ]
        write_csv(out / "cells.csv",
                  ["scenario_id", "delta", "n", "p", "p_rule", "reps", "freq_correct"],
                  [(scenario_id, delta, n, p, rule, reps, res.freq_correct)
                   for delta, n, p, rule, res in cells])
        for delta, n, p, rule, res in cells:
            print(f"delta={delta:g} n={n} p={p}: freq_correct={res.freq_correct:.3f}")
    elif study == "ratio-trace":
        scenario = _scenario_from_config(config, seed)
        n_grid = [int(n) for n in _as_list(config.get("n_grid", scenario.n))]
        p_coef = config.get("p_coef")
        result = ratio_trace_study(scenario, n_grid, reps,
                                   p_coef=None if p_coef is None else float(p_coef))
        rows = []
        for n in result.n_grid:
            traces = result.traces[n]
            for rep in range(traces.shape[0]):
                for idx in range(traces.shape[1]):
                    rows.append((scenario_id, n, result.p_of_n[n], rep, idx + 1, traces[rep, idx]))
        write_csv(out / "traces.csv", ["scenario_id", "n", "p", "rep", "index", "value"], rows)
        doc["median_ratios"] = {
            str(n): [float(v) for v in result.median_ratios[n]] for n in result.n_grid
        }
        for n in result.n_grid:
            med = result.median_ratios[n]
            print(f"n={n} p={result.p_of_n[n]}: median ratio argmin = {int(np.nanargmin(med)) + 1}")
    elif study == "two-step":
        scenario = _scenario_from_config(config, seed)
        result = two_step_study(scenario, reps)
        doc["one_step_counts"] = {str(k): v for k, v in result.one_step_counts.items()}
        doc["pair_counts"] = {f"{r1}+{r2}": v for (r1, r2), v in result.pair_counts.items()}
        doc["freq_one_step"] = result.freq_one
        doc["freq_two_step"] = result.freq_two
        doc["freq_two_step_sharp"] = result.freq_two_sharp
        print(f"freq_one_step={result.freq_one:.3f} freq_two_step={result.freq_two:.3f} "
              f"freq_two_step_sharp={result.freq_two_sharp:.3f}")
    else:
        raise ParseError(
            f"scenario file must set study to table1, ratio-trace or two-step, got {study!r}"
        )
    dump_json(out / "result.json", doc)
    return 0


def cmd_rates(args) -> int:
    config = load_config(args.scenario)
    scenario_id = str(config.get("id", Path(args.scenario).stem))
    reps = int(args.reps if args.reps is not None else config.get("reps", 200))
    seed = int(args.seed if args.seed is not None else config.get("seed", 0))
    config.setdefault("loading_scheme", "all-ones")
    config.setdefault("r", 1)
    config.setdefault("p", int(config.get("p", 10)))
    scenario = _scenario_from_config(config, seed)
    n_grid = [int(n) for n in _as_list(config.get("n_grid", scenario.n))]
    tracked = [int(j) for j in _as_list(config.get("tracked_j", [1, 2]))]
    p_coef = config.get("p_coef")
    study = eigen_error_study(scenario, n_grid, tracked, reps,
                              p_coef=None if p_coef is None else float(p_coef))
    slopes = fit_error_slopes(study)

    out = _out_dir(args)
    rows = []
    for n in study.n_grid:
        errors = study.errors[n]
        for rep in range(errors.shape[0]):
            for col, j in enumerate(study.tracked_j):
                rows.append((scenario_id, n, study.p_of_n[n], rep, j, errors[rep, col]))
    write_csv(out / "errors.csv", ["scenario_id", "n", "p", "rep", "index", "value"], rows)
    write_csv(out / "slopes.csv", ["j", "slope", "ci_low", "ci_high"],
              [(fit.j, fit.slope, fit.ci_low, fit.ci_high) for fit in slopes])
    dump_json(out / "result.json", {
        "id": scenario_id,
        "study": "rates",
        "reps": reps,
        "metadata": _metadata(seed),
        "slopes": [
            {"j": fit.j, "slope": fit.slope, "ci_low": fit.ci_low, "ci_high": fit.ci_high}
            for fit in slopes
        ],
    })
    for fit in slopes:
        print(f"eigenvalue {fit.j}: slope={fit.slope:.3f} ci=[{fit.ci_low:.3f}, {fit.ci_high:.3f}]")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 0
    try:
        return args.func(args)
    except (ParseError, DimensionError, OSError) as exc:
        print(f"hdfactor: error: {exc}", file=sys.stderr)
        return 2
    except HDFactorError as exc:
        print(f"hdfactor: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
