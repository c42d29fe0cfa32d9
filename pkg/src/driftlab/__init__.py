"""Separate environmental variation from instrumental drift in gas sensors.

Sensor errors are re-evaluated on data importance-resampled to a fixed
reference distribution of (temperature, CO2), so month-to-month RMSE
changes reflect the instrument rather than the weather.
"""

__version__ = "0.1.0"

from .density import (
    HistogramDensity2D,
    UniformRectDensity,
    coverage_diagnostic,
    estimate_histogram,
    eval_density,
)
from .ingest import align_average, load_sensor, parse_csv, remove_outliers
from .metrics import DriftReport, fleet_aggregate, monthly_drift_eval, rmse
from .model import Dataset, EvalConfig, MonthKey, Observation, SensorSeries, partition_by_month, validate_observation
from .resample import ResamplePlan, WeightedSet, compute_weights, effective_sample_size, resample
from .sensor import (
    BeerLambertEstimator,
    BeerLambertParams,
    PassthroughEstimator,
    estimate_co2,
    fit_params,
    forward_ir,
    passthrough_estimator,
)

__all__ = [
    "BeerLambertEstimator",
    "BeerLambertParams",
    "Dataset",
    "DriftReport",
    "EvalConfig",
    "HistogramDensity2D",
    "MonthKey",
    "Observation",
    "PassthroughEstimator",
    "ResamplePlan",
    "SensorSeries",
    "UniformRectDensity",
    "WeightedSet",
    "align_average",
    "compute_weights",
    "coverage_diagnostic",
    "effective_sample_size",
    "estimate_co2",
    "estimate_histogram",
    "eval_density",
    "fit_params",
    "fleet_aggregate",
    "forward_ir",
    "load_sensor",
    "monthly_drift_eval",
    "parse_csv",
    "partition_by_month",
    "passthrough_estimator",
    "remove_outliers",
    "resample",
    "rmse",
    "validate_observation",
]
