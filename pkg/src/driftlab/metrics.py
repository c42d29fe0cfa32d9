"""RMSE, monthly original-vs-resampled evaluation and fleet statistics."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .density import UniformRectDensity, coverage_diagnostic, estimate_histogram
from .errors import EmptySeries, ZeroWeightSum
from .ingest import nearest_rank
from .model import EvalConfig, MonthKey, SensorSeries, partition_by_month
from .resample import ResamplePlan, compute_weights, effective_sample_size, resample
from .rng import derive_seed

Estimator = Callable[..., np.ndarray]

QUANTILE_LEVELS = (1, 5, 25, 50, 75, 95, 99)


def prediction_errors(series: SensorSeries, estimator: Estimator, diagnostics: Counter | None = None) -> np.ndarray:
    """Signed errors ``f(x_T, x_I) - y`` per observation."""
    return estimator(series, diagnostics) - series.reference_co2


def rmse(series: SensorSeries, estimator: Estimator, diagnostics: Counter | None = None) -> float:
    if len(series) == 0:
        raise EmptySeries(f"series {series.sensor_id!r} is empty")
    err = prediction_errors(series, estimator, diagnostics)
    return float(np.sqrt(np.mean(err * err)))


@dataclass
class MonthResult:
    """Evaluation of one sensor-month; ``status`` is "ok" or "gap"."""

    month: MonthKey
    n_original: int
    rmse_original: float
    rmse_resampled: float | None = None
    n_resampled: int = 0
    ess: float | None = None
    coverage: float = 0.0
    low_confidence: bool = True
    status: str = "ok"
    seed: int = 0
    source_index: list[int] = field(default_factory=list)

    @property
    def rmse_difference(self) -> float | None:
        if self.rmse_resampled is None:
            return None
        return self.rmse_original - self.rmse_resampled

    def to_dict(self, provenance: bool = True) -> dict:
        out = {
            "month": str(self.month),
            "status": self.status,
            "n_original": self.n_original,
            "n_resampled": self.n_resampled,
            "rmse_original": self.rmse_original,
            "rmse_resampled": self.rmse_resampled,
            "rmse_difference": self.rmse_difference,
            "ess": self.ess,
            "coverage": self.coverage,
            "low_confidence": self.low_confidence,
            "seed": self.seed,
        }
        if provenance:
            out["source_index"] = list(self.source_index)
        return out

    @classmethod
    def from_dict(cls, data) -> "MonthResult":
        return cls(
            month=MonthKey.parse(data["month"]),
            n_original=data["n_original"],
            rmse_original=data["rmse_original"],
            rmse_resampled=data["rmse_resampled"],
            n_resampled=data["n_resampled"],
            ess=data["ess"],
            coverage=data["coverage"],
            low_confidence=data["low_confidence"],
            status=data["status"],
            seed=data["seed"],
            source_index=list(data.get("source_index", [])),
        )


def month_seed(seed: int, sensor_id: str, month: MonthKey) -> int:
    """Per sensor-month resampling seed; independent of other sensors."""
    return derive_seed(seed, "resample", sensor_id, str(month))


def desired_density(config: EvalConfig) -> UniformRectDensity:
    return UniformRectDensity(config.desired_temp_range, config.desired_co2_range)


def evaluate_month(
    month: MonthKey,
    series: SensorSeries,
    config: EvalConfig,
    estimator: Estimator,
    diagnostics: Counter | None = None,
    seed: int | None = None,
) -> MonthResult:
    """Original and importance-resampled RMSE of one month of data.

    ``seed`` overrides the derived month seed (used for repeat-seed
    spread estimates).
    """
    desired = desired_density(config)
    if seed is None:
        seed = month_seed(config.rng_seed, series.sensor_id, month)
    original = estimate_histogram(series.points, config.histogram_bins)
    result = MonthResult(
        month=month,
        n_original=len(series),
        rmse_original=rmse(series, estimator, diagnostics),
        coverage=coverage_diagnostic(original, desired),
        seed=seed,
    )
    try:
        weights = compute_weights(series.points, desired, original)
    except ZeroWeightSum:
        result.status = "gap"
        return result
    drawn = resample(series, weights, ResamplePlan(config.resample_count, seed))
    result.rmse_resampled = rmse(drawn, estimator)
    result.n_resampled = len(drawn)
    result.ess = effective_sample_size(weights)
    result.low_confidence = result.ess < config.low_confidence_ess
    result.source_index = drawn.source_index.tolist()
    return result


def monthly_drift_eval(
    sensor: SensorSeries,
    config: EvalConfig,
    estimator: Estimator,
    diagnostics: Counter | None = None,
) -> list[MonthResult]:
    """Evaluate every calendar month of a preprocessed sensor series."""
    return [
        evaluate_month(month, part, config, estimator, diagnostics)
        for month, part in partition_by_month(sensor).items()
    ]


@dataclass
class BoxStats:
    """Tukey box: quartiles by linear interpolation, whiskers at 1.5 IQR."""

    n: int
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: list[float]

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "BoxStats":
        v = np.sort(np.asarray(values, dtype=float))
        if len(v) == 0:
            raise EmptySeries("no values for box statistics")
        q1, median, q3 = np.percentile(v, [25, 50, 75])
        iqr = q3 - q1
        lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
        inside = v[(v >= lo_fence) & (v <= hi_fence)]
        return cls(
            n=len(v),
            median=float(median),
            q1=float(q1),
            q3=float(q3),
            whisker_low=float(inside.min()),
            whisker_high=float(inside.max()),
            outliers=[float(x) for x in v[(v < lo_fence) | (v > hi_fence)]],
        )

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class FleetMonth:
    month: MonthKey
    n_sensors: int
    mean_rmse_resampled: float
    std_rmse_resampled: float
    difference_box: BoxStats

    def to_dict(self) -> dict:
        return {
            "month": str(self.month),
            "n_sensors": self.n_sensors,
            "mean_rmse_resampled": self.mean_rmse_resampled,
            "std_rmse_resampled": self.std_rmse_resampled,
            "difference_box": self.difference_box.to_dict(),
        }


@dataclass
class FleetSummary:
    months: list[FleetMonth]
    mean_max_abs_difference: float | None

    def to_dict(self) -> dict:
        return {
            "months": [m.to_dict() for m in self.months],
            "mean_max_abs_difference": self.mean_max_abs_difference,
        }


def fleet_aggregate(reports: Mapping[str, Sequence[MonthResult]]) -> FleetSummary:
    """Across-sensor statistics per month, skipping gap months.

    The standard deviation is the population one (the sensors are the
    whole fleet). ``mean_max_abs_difference`` is the mean over sensors of
    each sensor's largest monthly ``|rmse_original - rmse_resampled|``.
    """
    by_month: dict[MonthKey, list[MonthResult]] = {}
    per_sensor_max = []
    for sensor_id in sorted(reports):
        diffs = []
        for r in reports[sensor_id]:
            if r.rmse_resampled is None:
                continue
            by_month.setdefault(r.month, []).append(r)
            diffs.append(abs(r.rmse_difference))
        if diffs:
            per_sensor_max.append(max(diffs))
    months = []
    for month in sorted(by_month):
        rs = by_month[month]
        resampled = np.array([r.rmse_resampled for r in rs])
        months.append(
            FleetMonth(
                month=month,
                n_sensors=len(rs),
                mean_rmse_resampled=float(resampled.mean()),
                std_rmse_resampled=float(resampled.std()),
                difference_box=BoxStats.from_values([r.rmse_difference for r in rs]),
            )
        )
    overall = float(np.mean(per_sensor_max)) if per_sensor_max else None
    return FleetSummary(months, overall)


def error_temperature_scatter(series: SensorSeries, estimator: Estimator) -> list[tuple[int, float, float]]:
    """(timestamp, temperature, signed error) per observation."""
    if len(series) == 0:
        raise EmptySeries(f"series {series.sensor_id!r} is empty")
    err = prediction_errors(series, estimator)
    return list(zip(series.timestamps.tolist(), series.temperature.tolist(), err.tolist()))


@dataclass
class DistributionSummary:
    count: int
    minimum: float
    maximum: float
    quantiles: dict[int, float]

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "min": self.minimum,
            "max": self.maximum,
            **{f"p{k:02d}": v for k, v in self.quantiles.items()},
        }


def monthly_distribution_summary(series: SensorSeries, channel: str) -> dict[MonthKey, DistributionSummary]:
    """Nearest-rank quantiles of ``temperature`` or ``reference_co2`` per month."""
    if channel not in ("temperature", "reference_co2"):
        raise ValueError(f"unsupported channel {channel!r}")
    if len(series) == 0:
        raise EmptySeries(f"series {series.sensor_id!r} is empty")
    out = {}
    for month, part in partition_by_month(series).items():
        values = getattr(part, channel)
        out[month] = DistributionSummary(
            count=len(values),
            minimum=float(values.min()),
            maximum=float(values.max()),
            quantiles={q: nearest_rank(values, q / 100) for q in QUANTILE_LEVELS},
        )
    return out


@dataclass
class DriftReport:
    """Per-sensor monthly results, fleet aggregates and run metadata."""

    sensors: dict[str, list[MonthResult]]
    fleet: FleetSummary
    metadata: dict = field(default_factory=dict)

    SCHEMA_VERSION = 1

    @classmethod
    def build(cls, sensors: Mapping[str, Sequence[MonthResult]], metadata: dict | None = None) -> "DriftReport":
        ordered = {k: list(sensors[k]) for k in sorted(sensors)}
        return cls(ordered, fleet_aggregate(ordered), dict(metadata or {}))

    def check(self) -> None:
        """Assert report-wide invariants (sign convention, box ordering)."""
        for results in self.sensors.values():
            for r in results:
                assert r.rmse_original >= 0
                if r.rmse_resampled is not None:
                    assert r.rmse_resampled >= 0
                    assert r.rmse_difference == r.rmse_original - r.rmse_resampled
        for m in self.fleet.months:
            b = m.difference_box
            assert b.q1 <= b.median <= b.q3

    def to_dict(self, provenance: bool = True) -> dict:
        return {
            "schema_version": self.SCHEMA_VERSION,
            "metadata": self.metadata,
            "sensors": {k: [r.to_dict(provenance) for r in v] for k, v in self.sensors.items()},
            "fleet": self.fleet.to_dict(),
        }

    @classmethod
    def from_dict(cls, data) -> "DriftReport":
        if data.get("schema_version") != cls.SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {data.get('schema_version')!r}")
        sensors = {k: [MonthResult.from_dict(r) for r in v] for k, v in data["sensors"].items()}
        return cls.build(sensors, data.get("metadata"))

    CSV_FIELDS = (
        "sensor_id", "month", "status", "n_original", "n_resampled", "rmse_original",
        "rmse_resampled", "rmse_difference", "ess", "coverage", "low_confidence", "seed",
    )

    def csv_rows(self) -> list[dict]:
        rows = []
        for sensor_id, results in self.sensors.items():
            for r in results:
                d = r.to_dict(provenance=False)
                rows.append({"sensor_id": sensor_id, **{k: d[k] for k in self.CSV_FIELDS[1:]}})
        return rows
