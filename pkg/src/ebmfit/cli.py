"""Command-line interface: sync, fit, simulate, project, diagnose.

All subcommands write delimited-text and JSON outputs through a
write-to-temp-then-rename step, so failed runs leave no partial files.
Exit codes: 0 success, 1 numerical failure, 2 input or validation failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import adf_test, residual_summary
from .estimation import FitOptions, FitResult, coefficient_of_variation, fit_mle
from .model import EbmParamVector, MeasurementConfig, build_system, param_names
from .pipeline import AssembledData, assemble_panel, read_manifest, write_series
from .projection import project, read_scenario, write_fan
from .simulation import monte_carlo
from .ssm import kalman_filter, standardized_innovations


class InputError(ValueError):
    """Bad inputs or configuration (exit code 2)."""


def _parse_years(text: str) -> np.ndarray:
    try:
        first, last = text.split(":")
        first, last = int(first), int(last)
    except ValueError as exc:
        raise InputError(f"bad year range {text!r}, expected A:B") from exc
    if last < first:
        raise InputError(f"empty year range {text!r}")
    return np.arange(first, last + 1)


def _parse_quantiles(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise InputError(f"bad quantile list {text!r}") from exc
    if not values or any(not 0 < v < 1 for v in values):
        raise InputError("quantiles must lie strictly between 0 and 1")
    return values


class _AtomicDir:
    """Stage output files in a temp directory; publish them on success."""

    def __init__(self, out_dir: Path):
        self.final = Path(out_dir)
        self.staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.final.parent))

    def path(self, name: str) -> Path:
        return self.staging / name

    def publish(self) -> None:
        self.final.mkdir(parents=True, exist_ok=True)
        for item in sorted(self.staging.iterdir()):
            os.replace(item, self.final / item.name)
        self.staging.rmdir()

    def discard(self) -> None:
        for item in self.staging.iterdir():
            item.unlink()
        self.staging.rmdir()


def _load_assembled(args) -> AssembledData:
    manifest = read_manifest(args.manifest)
    return assemble_panel(manifest, _parse_years(args.years))


def _config_from_panel(panel, f2x: float) -> MeasurementConfig:
    return MeasurementConfig(
        n_gmst=len(panel.rows_of_kind("gmst")),
        n_ocean_pairs=len(panel.rows_of_kind("ocean_temp")),
        f2x=f2x,
    )


def _fit_report_doc(fit: FitResult) -> dict:
    names = fit.names
    estimates = fit.theta_hat.to_array()
    doc = {
        "params": {n: float(v) for n, v in zip(names, estimates)},
        "se": None if fit.se is None else {n: float(v) for n, v in zip(names, fit.se)},
        "loglik": fit.loglik,
        "ecs": {"estimate": fit.ecs_hat, "se": fit.ecs_se},
        "cv": None if fit.cv is None else {k: float(v) for k, v in fit.cv.items()},
        "vcov_physical": None
        if fit.vcov_physical is None
        else [[float(v) for v in row] for row in fit.vcov_physical],
        "config": {
            "n_gmst": fit.config.n_gmst,
            "n_ocean_pairs": fit.config.n_ocean_pairs,
            "f2x": fit.config.f2x,
            "f2x_se": fit.config.f2x_se,
        },
        "convergence": dataclasses.asdict(fit.convergence),
        "flags": fit.flags,
    }
    return doc


def _fit_from_report(doc: dict) -> FitResult:
    config = MeasurementConfig(**doc["config"])
    names = param_names(config.n_gmst, config.n_ocean_pairs)
    values = np.array([doc["params"][n] for n in names])
    theta = EbmParamVector.from_array(values, config.n_gmst, config.n_ocean_pairs)
    se = None if doc.get("se") is None else np.array([doc["se"][n] for n in names])
    vcov = None if doc.get("vcov_physical") is None else np.array(doc["vcov_physical"])
    from .estimation import Convergence

    return FitResult(
        theta_hat=theta,
        loglik=doc.get("loglik", np.nan),
        se=se,
        vcov_physical=vcov,
        cv=doc.get("cv"),
        ecs_hat=doc["ecs"]["estimate"],
        ecs_se=doc["ecs"]["se"],
        convergence=Convergence(**doc.get("convergence", dataclasses.asdict(
            Convergence(True, "loaded", 0, 0, 0)))),
        config=config,
        flags=doc.get("flags", {}),
    )


def cmd_sync(args) -> int:
    manifest = read_manifest(args.manifest)
    out = _AtomicDir(Path(args.out))
    try:
        report_rows = []
        for series, sync in manifest:
            offset = sync.resolve_offset()
            if offset is None:
                report_rows.append([series.label, series.kind, "", "already synchronized"])
                synced = series
            else:
                from .pipeline import synchronize

                synced = synchronize(series, offset)
                report_rows.append([series.label, series.kind, repr(float(offset)), "shifted"])
            write_series(out.path(f"{series.label}.csv"), synced)
        with open(out.path("sync_report.csv"), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["label", "kind", "offset", "status"])
            writer.writerows(report_rows)
    except Exception:
        out.discard()
        raise
    out.publish()
    print(f"synchronized {len(manifest)} series -> {args.out}")
    return 0


def cmd_fit(args) -> int:
    data = _load_assembled(args)
    config = _config_from_panel(data.panel, args.f2x)
    options = FitOptions(
        restarts=args.restarts,
        max_evals=args.max_evals,
        stage1_evals=args.stage1_evals,
        seed=args.seed or 0,
    )
    fit = fit_mle(data.panel, config, data.natural_forcing, options=options)
    out = _AtomicDir(Path(args.out))
    try:
        with open(out.path("fit_report.json"), "w", encoding="utf-8") as fh:
            json.dump(_fit_report_doc(fit), fh, indent=2)
        model = build_system(fit.theta_hat, config, data.natural_forcing, data.panel.years)
        residuals = standardized_innovations(kalman_filter(model, data.panel))
        with open(out.path("residual_diagnostics.csv"), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["series", "mean", "std", "skewness", "kurtosis", "jarque_bera", "q1"])
            for i, meta in enumerate(data.panel.series_meta):
                stats = residual_summary(residuals[i])
                writer.writerow(
                    [meta.label]
                    + [repr(float(stats[k])) for k in ("mean", "std", "skewness", "kurtosis", "jarque_bera", "q1")]
                )
        with open(out.path("cv_table.csv"), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["parameter", "cv"])
            for name, value in coefficient_of_variation(fit).items():
                writer.writerow([name, repr(float(value))])
    except Exception:
        out.discard()
        raise
    out.publish()
    print(f"loglik {fit.loglik:.3f}, ECS {fit.ecs_hat:.2f} ({fit.ecs_se:.2f}) -> {args.out}")
    return 0


def cmd_simulate(args) -> int:
    if args.seed is None:
        raise InputError("simulate requires --seed for reproducibility")
    with open(args.dgp, encoding="utf-8") as fh:
        doc = json.load(fh)
    config = MeasurementConfig(**doc["config"])
    names = param_names(config.n_gmst, config.n_ocean_pairs)
    theta = EbmParamVector.from_array(
        np.array([doc["params"][n] for n in names]), config.n_gmst, config.n_ocean_pairs
    )
    data = _load_assembled(args)
    options = FitOptions(
        restarts=args.restarts,
        max_evals=args.max_evals,
        stage1_evals=args.stage1_evals,
        compute_se=False,
    )
    report = monte_carlo(
        theta,
        config,
        reps=args.reps,
        years=data.panel.years,
        reference_anthro=data.anthropogenic,
        natural_forcing=data.natural_forcing,
        rng_seed=args.seed,
        fit_options=options,
        workers=args.workers,
    )
    out = _AtomicDir(Path(args.out))
    try:
        with open(out.path("recovery_report.csv"), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["config", "parameter", "dgp_value", "bias", "std_dev", "rmse", "mae"])
            for cfg_name, table in report.tables.items():
                for row in table.rows:
                    writer.writerow(
                        [cfg_name, row.name]
                        + [repr(float(v)) for v in (row.dgp_value, row.bias, row.std_dev, row.rmse, row.mae)]
                    )
        for cfg_name, est in report.estimates.items():
            with open(out.path(f"estimates_{cfg_name}.csv"), "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["rep"] + report.estimate_names[cfg_name])
                for i in range(est.shape[0]):
                    writer.writerow([i] + [repr(float(v)) for v in est[i]])
        with open(out.path("simulation_meta.json"), "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "reps": report.reps,
                    "attempted": report.attempted,
                    "retained": report.retained,
                    "failures": report.failures,
                    "seed": args.seed,
                },
                fh,
                indent=2,
            )
    except Exception:
        out.discard()
        raise
    out.publish()
    print(
        f"{report.reps} replications ({report.attempted} trajectories attempted) -> {args.out}"
    )
    return 0


def cmd_project(args) -> int:
    if args.seed is None:
        raise InputError("project requires --seed for reproducibility")
    if not args.scenario:
        raise InputError("project requires at least one --scenario file")
    with open(args.fit, encoding="utf-8") as fh:
        fit = _fit_from_report(json.load(fh))
    if fit.vcov_physical is None:
        raise InputError("fit report carries no physical-parameter covariance")
    data = _load_assembled(args)
    quantiles = _parse_quantiles(args.quantiles)
    out = _AtomicDir(Path(args.out))
    try:
        for scenario_file in args.scenario:
            scenario = read_scenario(scenario_file)
            fan = project(
                fit,
                data.panel,
                scenario,
                data.natural_forcing,
                draws=args.draws,
                rng_seed=args.seed,
                quantiles=quantiles,
                workers=args.workers,
            )
            write_fan(out.path(f"fan_{scenario.name}.csv"), fan)
            if fan.high_rejection:
                print(f"warning: {scenario.name}: over half of parameter draws rejected", file=sys.stderr)
    except Exception:
        out.discard()
        raise
    out.publish()
    print(f"{len(args.scenario)} scenario fan(s) -> {args.out}")
    return 0


def cmd_diagnose(args) -> int:
    data = _load_assembled(args)
    out = _AtomicDir(Path(args.out))
    try:
        with open(out.path("unit_root_tests.csv"), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["series", "transform", "spec", "statistic", "chosen_lag", "crit_1pct", "crit_5pct", "reject_1pct", "reject_5pct"]
            )
            for i, meta in enumerate(data.panel.series_meta):
                row = data.panel.values[i]
                level = row[np.isfinite(row)]
                for label, values in (("level", level), ("diff", np.diff(level))):
                    for spec in ("c", "ct") if label == "diff" else ("c",):
                        res = adf_test(values, spec=spec, max_lag=min(args.max_lag, values.size // 4))
                        writer.writerow(
                            [meta.label, label, spec, repr(res.statistic), res.chosen_lag,
                             repr(res.crit_1pct), repr(res.crit_5pct), res.reject_1pct, res.reject_5pct]
                        )
    except Exception:
        out.discard()
        raise
    out.publish()
    print(f"unit-root table -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ebmfit",
        description="Two-layer energy balance model: estimation, simulation, projection.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_years=True):
        p.add_argument("--manifest", required=True, help="manifest JSON file")
        if needs_years:
            p.add_argument("--years", required=True, help="sample year range A:B")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="random seed")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1)

    p = sub.add_parser("sync", help="synchronize series baselines")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sync)

    def add_optimizer(p):
        p.add_argument("--restarts", type=int, default=5)
        p.add_argument("--max-evals", type=int, default=20_000)
        p.add_argument("--stage1-evals", type=int, default=4_000)

    p = sub.add_parser("fit", help="fit the model to an assembled panel")
    add_common(p)
    p.add_argument("--f2x", type=float, default=3.93)
    add_optimizer(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="run the parameter-recovery study")
    add_common(p)
    p.add_argument("--dgp", required=True, help="parameter JSON (fit report or as written by fit)")
    p.add_argument("--reps", type=int, default=1000)
    add_optimizer(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("project", help="scenario projection fans")
    add_common(p)
    p.add_argument("--fit", required=True, help="fit report JSON")
    p.add_argument("--scenario", action="append", default=[], help="scenario CSV (repeatable)")
    p.add_argument("--draws", type=int, default=10_000)
    p.add_argument("--quantiles", default="0.05,0.5,0.95")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("diagnose", help="unit-root diagnostics of the panel series")
    add_common(p)
    p.add_argument("--max-lag", type=int, default=15)
    p.set_defaults(func=cmd_diagnose)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
