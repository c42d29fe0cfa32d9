"""Observation records, per-sensor series and evaluation configuration.

Series are stored column-wise (one numpy array per channel) because every
downstream step is vectorized; :class:`Observation` is the row view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from datetime import datetime, timezone
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    ConfigError,
    EmptySeries,
    ImplausibleTemperature,
    InconsistentPresence,
    MissingSignal,
    NegativeReference,
    NonFinite,
    NonPositiveIr,
    UnorderedTimestamps,
)

TEMPERATURE_BOUNDS = (-60.0, 80.0)


@dataclass(frozen=True)
class Observation:
    """One time-aligned record.

    ``timestamp`` is Unix epoch seconds (UTC). At least one of
    ``ir_signal`` and ``sensor_co2`` must be present for the record to
    validate.
    """

    timestamp: int
    temperature: float
    reference_co2: float
    ir_signal: float | None = None
    sensor_co2: float | None = None

    @property
    def time(self) -> datetime:
        return datetime.fromtimestamp(self.timestamp, tz=timezone.utc)


def validate_observation(obs: Observation) -> Observation:
    """Return ``obs`` unchanged if it satisfies every record invariant."""
    for name in ("temperature", "reference_co2", "ir_signal", "sensor_co2"):
        value = getattr(obs, name)
        if value is not None and not math.isfinite(value):
            raise NonFinite(f"{name} is not finite: {value!r}")
    if obs.ir_signal is None and obs.sensor_co2 is None:
        raise MissingSignal("observation has neither ir_signal nor sensor_co2")
    if obs.ir_signal is not None and obs.ir_signal <= 0:
        raise NonPositiveIr(f"ir_signal must be > 0, got {obs.ir_signal!r}")
    if obs.reference_co2 < 0:
        raise NegativeReference(f"reference_co2 must be >= 0, got {obs.reference_co2!r}")
    lo, hi = TEMPERATURE_BOUNDS
    if not lo <= obs.temperature <= hi:
        raise ImplausibleTemperature(f"temperature {obs.temperature!r} outside [{lo}, {hi}] degC")
    return obs


@dataclass(frozen=True, order=True)
class MonthKey:
    year: int
    month: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError(f"invalid month {self.month}")

    @classmethod
    def from_index(cls, index: int) -> "MonthKey":
        """Inverse of :attr:`index` (months since 1970-01)."""
        year, month0 = divmod(int(index), 12)
        return cls(1970 + year, month0 + 1)

    @classmethod
    def parse(cls, text: str) -> "MonthKey":
        year, month = text.split("-")
        return cls(int(year), int(month))

    @property
    def index(self) -> int:
        return (self.year - 1970) * 12 + self.month - 1

    @property
    def start(self) -> int:
        """Epoch seconds of the first instant of the month."""
        return int(datetime(self.year, self.month, 1, tzinfo=timezone.utc).timestamp())

    @property
    def end(self) -> int:
        """Epoch seconds of the first instant of the next month."""
        return MonthKey.from_index(self.index + 1).start

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.start + self.end)

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"


def month_indices(timestamps: np.ndarray) -> np.ndarray:
    """Calendar month (months since 1970-01, UTC) of each epoch timestamp."""
    ts = np.asarray(timestamps, dtype="int64").astype("datetime64[s]")
    return ts.astype("datetime64[M]").astype("int64")


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    if arr.ndim != 1:
        raise ValueError("series channels must be one-dimensional")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class SensorSeries:
    """Time-ordered observations of one sensor, stored column-wise.

    ``source_index`` is set only on resampled series: it records which row
    of the source series each draw came from, and relaxes the strictly
    increasing timestamp requirement (draws repeat and interleave).
    """

    sensor_id: str
    timestamps: np.ndarray
    temperature: np.ndarray
    reference_co2: np.ndarray
    ir_signal: np.ndarray | None = None
    sensor_co2: np.ndarray | None = None
    cadence: float = 600.0
    source_index: np.ndarray | None = None

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "timestamps", _frozen_array(self.timestamps, "int64"))
        n = len(self.timestamps)
        for name in ("temperature", "reference_co2", "ir_signal", "sensor_co2"):
            value = getattr(self, name)
            if value is None:
                continue
            arr = _frozen_array(value, "float64")
            if len(arr) != n:
                raise ValueError(f"channel {name} has length {len(arr)}, expected {n}")
            set_(self, name, arr)
        if self.source_index is not None:
            set_(self, "source_index", _frozen_array(self.source_index, "int64"))
        if self.cadence <= 0:
            raise ValueError("cadence must be > 0")
        self._validate()

    def _validate(self):
        if self.ir_signal is None and self.sensor_co2 is None:
            raise MissingSignal(f"series {self.sensor_id!r} has neither ir_signal nor sensor_co2")
        for name in ("temperature", "reference_co2", "ir_signal", "sensor_co2"):
            arr = getattr(self, name)
            if arr is not None and not np.all(np.isfinite(arr)):
                raise NonFinite(f"series {self.sensor_id!r}: non-finite {name}")
        if self.ir_signal is not None and np.any(self.ir_signal <= 0):
            raise NonPositiveIr(f"series {self.sensor_id!r}: ir_signal must be > 0")
        if np.any(self.reference_co2 < 0):
            raise NegativeReference(f"series {self.sensor_id!r}: negative reference_co2")
        lo, hi = TEMPERATURE_BOUNDS
        if np.any((self.temperature < lo) | (self.temperature > hi)):
            raise ImplausibleTemperature(f"series {self.sensor_id!r}: temperature outside [{lo}, {hi}] degC")
        if self.source_index is None:
            if np.any(np.diff(self.timestamps) <= 0):
                raise UnorderedTimestamps(f"series {self.sensor_id!r}: timestamps not strictly increasing")
        elif len(self.source_index) != len(self):
            raise ValueError("source_index length mismatch")

    @classmethod
    def from_observations(
        cls, sensor_id: str, observations: Sequence[Observation], cadence: float = 600.0
    ) -> "SensorSeries":
        for obs in observations:
            validate_observation(obs)
        has_ir = {obs.ir_signal is not None for obs in observations}
        has_co2 = {obs.sensor_co2 is not None for obs in observations}
        if len(has_ir) > 1 or len(has_co2) > 1:
            raise InconsistentPresence(f"series {sensor_id!r}: mixed channel presence")
        # an empty series still needs a presence pattern; default to IR
        ir = [o.ir_signal for o in observations] if (has_ir != {False}) else None
        co2 = [o.sensor_co2 for o in observations] if has_co2 == {True} else None
        return cls(
            sensor_id=sensor_id,
            timestamps=[o.timestamp for o in observations],
            temperature=[o.temperature for o in observations],
            reference_co2=[o.reference_co2 for o in observations],
            ir_signal=ir,
            sensor_co2=co2,
            cadence=cadence,
        )

    def __len__(self) -> int:
        return len(self.timestamps)

    def __getitem__(self, i: int) -> Observation:
        return Observation(
            timestamp=int(self.timestamps[i]),
            temperature=float(self.temperature[i]),
            reference_co2=float(self.reference_co2[i]),
            ir_signal=None if self.ir_signal is None else float(self.ir_signal[i]),
            sensor_co2=None if self.sensor_co2 is None else float(self.sensor_co2[i]),
        )

    def __iter__(self) -> Iterator[Observation]:
        return (self[i] for i in range(len(self)))

    @property
    def observations(self) -> list[Observation]:
        return list(self)

    @property
    def points(self) -> np.ndarray:
        """(n, 2) array of (temperature, reference_co2)."""
        return np.column_stack([self.temperature, self.reference_co2])

    def _subset(self, idx: np.ndarray, source_index: np.ndarray | None) -> "SensorSeries":
        def pick(arr):
            return None if arr is None else arr[idx]

        return SensorSeries(
            sensor_id=self.sensor_id,
            timestamps=self.timestamps[idx],
            temperature=self.temperature[idx],
            reference_co2=self.reference_co2[idx],
            ir_signal=pick(self.ir_signal),
            sensor_co2=pick(self.sensor_co2),
            cadence=self.cadence,
            source_index=source_index,
        )

    def select(self, mask_or_index: np.ndarray) -> "SensorSeries":
        """Order-preserving subset (boolean mask or ascending indices)."""
        idx = np.asarray(mask_or_index)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        src = None if self.source_index is None else self.source_index[idx]
        return self._subset(idx, src)

    def take(self, indices: np.ndarray) -> "SensorSeries":
        """Draw rows by index (repeats allowed); provenance is kept."""
        idx = np.asarray(indices, dtype="int64")
        src = idx if self.source_index is None else self.source_index[idx]
        return self._subset(idx, src)

    def month_indices(self) -> np.ndarray:
        return month_indices(self.timestamps)


def partition_by_month(series: SensorSeries) -> dict[MonthKey, SensorSeries]:
    """Split a series into UTC calendar months, ascending by month."""
    if len(series) == 0:
        return {}
    months = series.month_indices()
    out: dict[MonthKey, SensorSeries] = {}
    for m in np.unique(months):
        out[MonthKey.from_index(int(m))] = series.select(months == m)
    return out


@dataclass(frozen=True)
class Dataset:
    """Per-sensor series keyed by sensor id."""

    series: Mapping[str, SensorSeries]

    def __post_init__(self):
        for key, s in self.series.items():
            if key != s.sensor_id:
                raise ValueError(f"key {key!r} does not match sensor_id {s.sensor_id!r}")
            if len(s) < 1:
                raise EmptySeries(f"sensor {key!r} has no observations")

    @classmethod
    def from_series(cls, series: Sequence[SensorSeries]) -> "Dataset":
        ids = [s.sensor_id for s in series]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate sensor ids")
        return cls({s.sensor_id: s for s in series})

    @property
    def counts(self) -> dict[str, int]:
        return {k: len(s) for k, s in self.series.items()}

    def __getitem__(self, sensor_id: str) -> SensorSeries:
        return self.series[sensor_id]

    def __iter__(self):
        return iter(self.series)

    def __len__(self) -> int:
        return len(self.series)


def _range(value, name) -> tuple[float, float]:
    lo, hi = (float(v) for v in value)
    if not lo < hi:
        raise ConfigError(f"{name} must satisfy lo < hi, got [{lo}, {hi}]")
    return lo, hi


@dataclass(frozen=True)
class EvalConfig:
    averaging_window: int = 600
    outlier_quantile: float = 0.999
    desired_temp_range: tuple[float, float] = (0.0, 20.0)
    desired_co2_range: tuple[float, float] = (400.0, 500.0)
    resample_count: int = 500
    rng_seed: int = 0
    histogram_bins: tuple[float, float] = (2.0, 10.0)
    low_confidence_ess: float = 10.0

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "desired_temp_range", _range(self.desired_temp_range, "desired_temp_range"))
        set_(self, "desired_co2_range", _range(self.desired_co2_range, "desired_co2_range"))
        bins = tuple(float(b) for b in self.histogram_bins)
        if len(bins) != 2 or min(bins) <= 0:
            raise ConfigError("histogram_bins must be two positive widths")
        set_(self, "histogram_bins", bins)
        if int(self.resample_count) < 1:
            raise ConfigError("resample_count must be >= 1")
        if self.averaging_window <= 0:
            raise ConfigError("averaging_window must be > 0")
        if not 0 < self.outlier_quantile <= 1:
            raise ConfigError("outlier_quantile must be in (0, 1]")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ConfigError("rng_seed must be an unsigned 64-bit integer")

    @classmethod
    def from_mapping(cls, data: Mapping, **overrides) -> "EvalConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown eval settings: {sorted(unknown)}")
        merged = {**data, **{k: v for k, v in overrides.items() if v is not None}}
        return cls(**merged)

    def to_dict(self) -> dict:
        return {
            "averaging_window": self.averaging_window,
            "outlier_quantile": self.outlier_quantile,
            "desired_temp_range": list(self.desired_temp_range),
            "desired_co2_range": list(self.desired_co2_range),
            "resample_count": self.resample_count,
            "rng_seed": self.rng_seed,
            "histogram_bins": list(self.histogram_bins),
            "low_confidence_ess": self.low_confidence_ess,
        }

    def with_seed(self, seed: int) -> "EvalConfig":
        return replace(self, rng_seed=seed)
