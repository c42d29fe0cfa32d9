"""Command-line entry point: ``driftlab simulate|ingest-check|evaluate|report``.

Exit codes: 0 success (possibly with warnings), 1 usage or configuration
error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields, replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import RunConfig, SensorSource, dump_evaluate_config, load_config, parse_formats
from .density import UniformRectDensity
from .errors import ConfigError, DataError, DriftLabError, EmptyAfterFiltering, InvalidSpec, IoFailure
from .ingest import load_sensor
from .metrics import (
    DriftReport,
    MonthResult,
    error_temperature_scatter,
    monthly_distribution_summary,
    monthly_drift_eval,
)
from .sensor import BeerLambertEstimator, BeerLambertParams, PassthroughEstimator, fit_params
from .synth import (
    DAY,
    EnvironmentSpec,
    default_fleet,
    generate_fleet,
    instrument_from_dict,
    instrument_to_dict,
    monthly_oracle,
    dataset_months,
    write_dataset_csv,
)

log = logging.getLogger("driftlab")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


def _dump_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=1, allow_nan=False) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


# ---------------------------------------------------------------- simulate


def _environment_from(data: dict) -> EnvironmentSpec:
    data = dict(data)
    start = data.get("start")
    if isinstance(start, str):
        dt = datetime.fromisoformat(start.replace("Z", "+00:00"))
        data["start"] = int((dt if dt.tzinfo else dt.replace(tzinfo=timezone.utc)).timestamp())
    elif isinstance(start, datetime):
        data["start"] = int((start if start.tzinfo else start.replace(tzinfo=timezone.utc)).timestamp())
    known = {f.name for f in fields(EnvironmentSpec)}
    unknown = set(data) - known
    if unknown:
        raise InvalidSpec(f"unknown environment settings: {sorted(unknown)}")
    env = EnvironmentSpec(**data)
    env.validate()
    return env


def run_simulate(cfg: RunConfig, out: Path) -> dict:
    """Write a synthetic fleet, its ground truth and a ready evaluate config."""
    sim = dict(cfg.simulate)
    env = _environment_from(sim.pop("environment", {}))
    seed = cfg.eval.rng_seed
    explicit = sim.pop("instruments", None)
    oracle_samples = int(sim.pop("oracle_samples", 20000))
    report_co2 = bool(sim.pop("report_co2", False))
    if explicit:
        instruments = tuple(
            instrument_from_dict({**d, "drift": {"origin": env.start, **d.get("drift", {})}}) for d in explicit
        )
        if sim:
            raise InvalidSpec(f"settings {sorted(sim)} conflict with explicit instruments")
    else:
        try:
            fleet = default_fleet(seed=seed, env=env, **sim)
        except TypeError as exc:
            raise InvalidSpec(f"invalid [simulate] settings: {exc}") from None
        instruments = fleet.instruments
    if report_co2:
        instruments = tuple(replace(i, report_co2=True) for i in instruments)
    dataset = generate_fleet(env, instruments, seed)
    data_dir = out / "data"
    try:
        write_dataset_csv(dataset, data_dir)
        sensors = []
        for inst in instruments:
            params_rel = f"data/params_{inst.sensor_id}.json"
            inst.calibration.save(out / params_rel)
            cols = {"temperature": "temperature", "ir_signal": "ir_signal"}
            if report_co2:
                cols["sensor_co2"] = "sensor_co2"
            sensors.append(
                {"id": inst.sensor_id, "path": f"data/sensor_{inst.sensor_id}.csv", "columns": cols, "params": params_rel}
            )
        desired = UniformRectDensity(cfg.eval.desired_temp_range, cfg.eval.desired_co2_range)
        months = dataset_months(dataset)
        oracle = {
            "schema_version": 1,
            "seed": seed,
            "desired": desired.to_dict(),
            "mc_samples": oracle_samples,
            "time": "month midpoint",
            "sensors": {
                inst.sensor_id: {
                    str(m): v for m, v in monthly_oracle(inst, months, desired, oracle_samples, seed).items()
                }
                for inst in instruments
            },
        }
        _dump_json(out / "oracle.json", oracle)
        _dump_json(
            out / "fleet.json",
            {
                "seed": seed,
                "environment": {f.name: getattr(env, f.name) for f in fields(env)},
                "instruments": [instrument_to_dict(i) for i in instruments],
            },
        )
        (out / "evaluate.toml").write_text(
            dump_evaluate_config(
                seed,
                sensors,
                {"path": "data/reference.csv", "columns": {"reference_co2": "reference_co2"}},
                {k: v for k, v in cfg.eval.to_dict().items() if k != "rng_seed"},
            )
        )
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return {"sensors": len(instruments), "rows": len(env.timestamps), "months": len(months)}


# ---------------------------------------------------------------- evaluate


def _estimator_for(cfg: RunConfig, src: SensorSource, series=None):
    est = cfg.estimator
    if est.mode == "passthrough":
        return PassthroughEstimator()
    if est.fit_days > 0 and series is not None:
        cutoff = series.timestamps[0] + est.fit_days * DAY
        mask = series.timestamps < cutoff
        window = zip(series.temperature[mask], series.ir_signal[mask], series.reference_co2[mask])
        return BeerLambertEstimator(fit_params(window))
    path = src.params or est.params
    if path is None:
        raise ConfigError(f"sensor {src.sensor_id}: beer-lambert estimator needs a params file or fit_days")
    try:
        return BeerLambertEstimator(BeerLambertParams.load(cfg.resolve(path)))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad params file {path}: {exc}") from None


def _load(cfg: RunConfig, src: SensorSource):
    ref = cfg.reference
    try:
        return load_sensor(
            cfg.resolve(src.path),
            src.columns,
            cfg.resolve(ref.path) if ref else None,
            ref.columns if ref else None,
            sensor_id=src.sensor_id,
            window=cfg.eval.averaging_window,
            quantile=cfg.eval.outlier_quantile,
            time_column=src.time_column,
            reference_time_column=ref.time_column if ref else "timestamp",
        )
    except OSError as exc:
        raise IoFailure(f"sensor {src.sensor_id}: {exc}") from exc
    except DataError as exc:
        raise type(exc)(f"sensor {src.sensor_id}: {exc}") from exc


def _evaluate_sensor(args) -> dict:
    cfg, src = args
    series, stats = _load(cfg, src)
    if len(series) == 0:
        raise EmptyAfterFiltering(f"sensor {src.sensor_id}: no data left after preprocessing")
    estimator = _estimator_for(cfg, src, series)
    diagnostics: Counter = Counter()
    results = monthly_drift_eval(series, cfg.eval, estimator, diagnostics)
    return {
        "sensor_id": src.sensor_id,
        "results": [r.to_dict() for r in results],
        "stats": stats,
        "diagnostics": dict(sorted(diagnostics.items())),
        "estimator": estimator.describe(),
        "scatter": error_temperature_scatter(series, estimator),
        "distributions": {
            ch: {str(m): s.to_dict() for m, s in monthly_distribution_summary(series, ch).items()}
            for ch in ("temperature", "reference_co2")
        },
    }


def run_evaluate(cfg: RunConfig, out: Path) -> DriftReport:
    if not cfg.sensors:
        raise ConfigError("no sensors configured")
    cfg.check_paths()
    tasks = [(cfg, s) for s in cfg.sensors]
    if cfg.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(tasks))) as pool:
            outputs = list(pool.map(_evaluate_sensor, tasks))
    else:
        outputs = [_evaluate_sensor(t) for t in tasks]

    warnings = []
    for o in outputs:
        for r in o["results"]:
            if r["status"] == "gap":
                warnings.append(f"sensor {o['sensor_id']} month {r['month']}: no data in desired region (gap)")
            elif r["low_confidence"]:
                warnings.append(f"sensor {o['sensor_id']} month {r['month']}: low effective sample size {r['ess']:.1f}")
    metadata = {
        "generator": f"driftlab {__version__}",
        "seed": cfg.eval.rng_seed,
        "config": cfg.to_dict(),
        "estimators": {o["sensor_id"]: o["estimator"] for o in outputs},
        "ingest": {o["sensor_id"]: o["stats"] for o in outputs},
        "diagnostics": {o["sensor_id"]: o["diagnostics"] for o in outputs},
        "warnings": warnings,
    }
    report = DriftReport.build(
        {o["sensor_id"]: [MonthResult.from_dict(r) for r in o["results"]] for o in outputs}, metadata
    )
    report.check()
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_report(report, out, cfg.formats)
        plots = out / "plots"
        plots.mkdir(exist_ok=True)
        for o in outputs:
            sid = o["sensor_id"]
            _write_csv(
                plots / f"scatter_{sid}.csv",
                ["timestamp", "temperature", "error"],
                ([t, _cell(x), _cell(e)] for t, x, e in o["scatter"]),
            )
            for ch, per_month in o["distributions"].items():
                rows = [[m, *(_cell(v) for v in s.values())] for m, s in per_month.items()]
                header = ["month", *next(iter(per_month.values())).keys()]
                _write_csv(plots / f"distribution_{ch}_{sid}.csv", header, rows)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    for w in warnings:
        log.warning(w)
    return report


def write_report(report: DriftReport, out: Path, formats) -> None:
    if "json" in formats:
        _dump_json(out / "report.json", report.to_dict())
    if "csv" in formats:
        _write_csv(
            out / "report.csv",
            DriftReport.CSV_FIELDS,
            ([_cell(row[k]) for k in DriftReport.CSV_FIELDS] for row in report.csv_rows()),
        )
    plots = out / "plots"
    plots.mkdir(exist_ok=True)
    _write_csv(
        plots / "fleet_monthly.csv",
        ["month", "n_sensors", "mean_rmse_resampled", "std_rmse_resampled", "lower", "upper"],
        (
            [str(m.month), m.n_sensors, _cell(m.mean_rmse_resampled), _cell(m.std_rmse_resampled),
             _cell(m.mean_rmse_resampled - m.std_rmse_resampled), _cell(m.mean_rmse_resampled + m.std_rmse_resampled)]
            for m in report.fleet.months
        ),
    )
    _write_csv(
        plots / "difference_box.csv",
        ["month", "n", "median", "q1", "q3", "whisker_low", "whisker_high", "outliers"],
        (
            [str(m.month), b.n, _cell(b.median), _cell(b.q1), _cell(b.q3), _cell(b.whisker_low),
             _cell(b.whisker_high), ";".join(repr(x) for x in b.outliers)]
            for m in report.fleet.months
            for b in [m.difference_box]
        ),
    )


# ---------------------------------------------------------------- ingest-check / report


def run_ingest_check(cfg: RunConfig) -> dict:
    if not cfg.sensors:
        raise ConfigError("no sensors configured")
    cfg.check_paths()
    summary = {}
    for src in cfg.sensors:
        series, stats = _load(cfg, src)
        stats["first"] = int(series.timestamps[0]) if len(series) else None
        stats["last"] = int(series.timestamps[-1]) if len(series) else None
        summary[src.sensor_id] = stats
    return summary


def run_report(path: Path, out: Path | None, formats) -> DriftReport:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"report not found: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read report {path}: {exc}") from None
    try:
        report = DriftReport.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed report {path}: {exc}") from None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_report(report, out, formats)
    return report


def _print_summary(report: DriftReport, stream) -> None:
    print(f"{'month':8} {'sensors':>7} {'mean':>9} {'std':>9} {'diff med':>9}", file=stream)
    for m in report.fleet.months:
        print(
            f"{str(m.month):8} {m.n_sensors:7d} {m.mean_rmse_resampled:9.3f} "
            f"{m.std_rmse_resampled:9.3f} {m.difference_box.median:9.3f}",
            file=stream,
        )
    mm = report.fleet.mean_max_abs_difference
    print(f"mean max |rmse difference|: {'n/a' if mm is None else f'{mm:.3f} ppm'}", file=stream)


# ---------------------------------------------------------------- argparse


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--seed", type=int, help="64-bit RNG seed (overrides config)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", help="comma-separated output formats: json,csv")
    common.add_argument("--jobs", type=int, help="worker processes for per-sensor evaluation")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="driftlab", description="Separate environmental variation from instrumental drift.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="generate a synthetic fleet with ground truth")
    sub.add_parser("ingest-check", parents=[common], help="preprocess inputs and print counts")
    sub.add_parser("evaluate", parents=[common], help="run the drift evaluation")
    rep = sub.add_parser("report", parents=[common], help="summarize or re-export a report.json")
    rep.add_argument("--input", required=True, help="report.json from a previous evaluate run")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "report":
            formats = parse_formats(args.format) if args.format else ("json", "csv")
            report = run_report(Path(args.input), Path(args.out) if args.out else None, formats)
            _print_summary(report, sys.stdout)
            return EXIT_OK
        cfg = load_config(args.config, seed=args.seed, jobs=args.jobs, out=args.out, formats=args.format)
        if args.command == "simulate":
            info = run_simulate(cfg, Path(cfg.out))
            print(json.dumps(info))
        elif args.command == "ingest-check":
            print(json.dumps(run_ingest_check(cfg), indent=1))
        elif args.command == "evaluate":
            report = run_evaluate(cfg, Path(cfg.out))
            _print_summary(report, sys.stdout)
    except ConfigError as exc:
        log.error(str(exc))
        return EXIT_USAGE
    except (DataError, IoFailure) as exc:
        log.error(str(exc))
        return EXIT_DATA
    except DriftLabError as exc:
        log.error(str(exc))
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
