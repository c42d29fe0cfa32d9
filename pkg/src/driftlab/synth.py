"""Synthetic co-located sensor fleets with known instrumental drift.

One environment trajectory (temperature, reference CO2) is shared by all
sensors. Each sensor observes it through the forward Beer-Lambert model
with its own gain drift, cold-temperature response and IR noise, and is
read out with possibly stale calibration constants. Because the
instrument model is known, :func:`oracle_instrumental_rmse` can integrate
the estimator error directly over the desired environment density, which
is the quantity the resampling pipeline is supposed to recover.

Randomness comes from a single seed split into named substreams:
``environment``, ``sensor-noise/<id>``, ``gain-walk`` and ``oracle``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .density import UniformRectDensity
from .errors import InvalidSpec
from .ingest import format_timestamp
from .model import TEMPERATURE_BOUNDS, Dataset, MonthKey, SensorSeries, month_indices
from .rng import substream
from .sensor import BeerLambertParams, estimate_co2, forward_ir

DAY = 86400
YEAR_DAYS = 365.25
DEFAULT_START = int(datetime(2017, 3, 1, tzinfo=timezone.utc).timestamp())


@dataclass(frozen=True)
class EnvironmentSpec:
    start: int = DEFAULT_START
    duration_days: float = 730.0
    cadence: int = 600
    temp_mean: float = 10.0
    temp_annual_amplitude: float = 10.0
    temp_coldest_day: float = 15.0
    temp_diurnal_amplitude: float = 4.0
    temp_noise: float = 1.0
    co2_baseline: float = 435.0
    co2_annual_amplitude: float = 12.0
    co2_peak_day: float = 45.0
    co2_diurnal_amplitude: float = 25.0
    spike_rate: float = 0.1  # arrivals per hour
    spike_magnitude: float = 30.0  # mean ppm per spike
    spike_decay: float = 3.0  # e-folding time, hours
    co2_noise: float = 5.0

    def validate(self) -> None:
        if self.duration_days <= 0:
            raise InvalidSpec("duration_days must be > 0")
        if self.cadence <= 0:
            raise InvalidSpec("cadence must be > 0")
        if self.duration_days * DAY < self.cadence:
            raise InvalidSpec("duration shorter than one cadence step")
        for name in ("temp_noise", "co2_noise", "spike_rate", "spike_magnitude"):
            if getattr(self, name) < 0:
                raise InvalidSpec(f"{name} must be >= 0")
        if self.co2_baseline < 0:
            raise InvalidSpec("co2_baseline must be >= 0")
        if self.spike_decay <= 0:
            raise InvalidSpec("spike_decay must be > 0")

    @property
    def timestamps(self) -> np.ndarray:
        n = int(self.duration_days * DAY // self.cadence)
        return self.start + self.cadence * np.arange(n, dtype="int64")

    def temperature_cycle(self, t) -> np.ndarray:
        """Noise-free temperature (annual + diurnal) at epoch seconds ``t``."""
        t = np.asarray(t, dtype=float)
        annual = np.cos(2 * np.pi * (t / DAY - self.temp_coldest_day) / YEAR_DAYS)
        hour = (t % DAY) / 3600.0
        diurnal = np.cos(2 * np.pi * (hour - 4.0) / 24.0)  # coldest at 04:00 UTC
        return self.temp_mean - self.temp_annual_amplitude * annual - self.temp_diurnal_amplitude * diurnal

    def annual_mean_temperature(self, start: float, end: float) -> float:
        """Exact time-average of the annual temperature term over [start, end)."""
        w = 2 * np.pi / (YEAR_DAYS * DAY)
        phase = 2 * np.pi * self.temp_coldest_day / YEAR_DAYS
        integral = (np.sin(w * end - phase) - np.sin(w * start - phase)) / w
        return float(self.temp_mean - self.temp_annual_amplitude * integral / (end - start))

    def co2_cycle(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        annual = np.cos(2 * np.pi * (t / DAY - self.co2_peak_day) / YEAR_DAYS)
        hour = (t % DAY) / 3600.0
        diurnal = np.cos(2 * np.pi * (hour - 6.0) / 24.0)  # night-time build-up
        return self.co2_baseline + self.co2_annual_amplitude * annual + self.co2_diurnal_amplitude * diurnal

    def generate(self, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(timestamps, temperature, reference_co2) for the whole duration."""
        self.validate()
        rng = substream(seed, "environment")
        t = self.timestamps
        n = len(t)
        temperature = self.temperature_cycle(t) + rng.normal(0.0, self.temp_noise, n)
        lo, hi = TEMPERATURE_BOUNDS
        temperature = np.clip(temperature, lo, hi)
        # Poisson-arrival pulses with exponential magnitudes and decay
        arrivals = rng.poisson(self.spike_rate * self.cadence / 3600.0, n)
        mags = np.zeros(n)
        hit = arrivals > 0
        mags[hit] = rng.gamma(arrivals[hit], self.spike_magnitude) if self.spike_magnitude > 0 else 0.0
        decay = math.exp(-self.cadence / (self.spike_decay * 3600.0))
        spikes = lfilter([1.0], [1.0, -decay], mags)
        co2 = self.co2_cycle(t) + spikes + rng.normal(0.0, self.co2_noise, n)
        return t, temperature, np.clip(co2, 0.0, None)


@dataclass(frozen=True)
class GainDrift:
    """Multiplicative IR gain ``g(t)``.

    ``linear``: ``1 + slope_per_year * years_since_origin``.
    ``random_walk``: ``exp(W_k)`` with ``W`` a Gaussian walk stepping every
    ``step_days``, drawn from ``seed``.
    """

    kind: str = "none"
    slope_per_year: float = 0.0
    step_sigma: float = 0.0
    step_days: float = 1.0
    seed: int = 0
    origin: int = DEFAULT_START

    def validate(self, start: int, end: int) -> None:
        if self.kind not in ("none", "linear", "random_walk"):
            raise InvalidSpec(f"unknown drift kind {self.kind!r}")
        if self.step_sigma < 0 or self.step_days <= 0:
            raise InvalidSpec("step_sigma must be >= 0 and step_days > 0")
        if self.kind == "linear":
            g = self.gain(np.array([start, end]))
            if np.any(g <= 0):
                raise InvalidSpec("linear gain drift reaches zero within the simulated range")

    def gain(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        elapsed = t - self.origin
        if self.kind == "none":
            return np.ones_like(t)
        if self.kind == "linear":
            return 1.0 + self.slope_per_year * elapsed / (YEAR_DAYS * DAY)
        step = np.floor(np.maximum(elapsed, 0.0) / (self.step_days * DAY)).astype("int64")
        steps = substream(self.seed, "gain-walk").normal(0.0, self.step_sigma, int(step.max()) + 1)
        steps[0] = 0.0
        return np.exp(np.cumsum(steps)[step])


@dataclass(frozen=True)
class InstrumentSpec:
    """Ground-truth behaviour of one simulated NDIR sensor.

    ``cold_coefficient`` is the fractional loss of IR gain per degC below
    ``cold_threshold``; the sensor then over-reads in the cold, the way
    low-cost sensors degrade outside their rated range.
    """

    sensor_id: str
    true_params: BeerLambertParams = BeerLambertParams(1.0, 1e-4)
    calibrated_params: BeerLambertParams | None = None
    drift: GainDrift = GainDrift()
    ir_noise: float = 0.0
    temperature_bias: float = 0.0
    cold_coefficient: float = 0.0
    cold_threshold: float = 0.0
    report_co2: bool = False

    @property
    def calibration(self) -> BeerLambertParams:
        return self.calibrated_params or self.true_params

    def validate(self, start: int, end: int) -> None:
        if self.ir_noise < 0:
            raise InvalidSpec("ir_noise must be >= 0")
        lowest = TEMPERATURE_BOUNDS[0] + self.temperature_bias
        if self.cold_coefficient < 0 or self.cold_coefficient * max(self.cold_threshold - lowest, 0.0) >= 1:
            raise InvalidSpec("cold_coefficient must be >= 0 and keep the gain positive")
        self.drift.validate(start, end)

    def ir_signal(self, t, temperature, co2, eps=None) -> np.ndarray:
        """Noisy detector signal; ``eps`` are standard-normal noise draws."""
        actual = np.asarray(temperature, dtype=float) + self.temperature_bias
        cold = 1.0 - self.cold_coefficient * np.maximum(self.cold_threshold - actual, 0.0)
        x = self.drift.gain(t) * cold * np.asarray(forward_ir(self.true_params, actual, co2))
        if eps is not None and self.ir_noise > 0:
            x = x * np.exp(self.ir_noise * np.asarray(eps))
        return x


def generate_fleet(env: EnvironmentSpec, instruments: Sequence[InstrumentSpec], seed: int) -> Dataset:
    """Simulate every instrument against one shared environment."""
    if not instruments:
        raise InvalidSpec("at least one instrument is required")
    ids = [i.sensor_id for i in instruments]
    if len(set(ids)) != len(ids):
        raise InvalidSpec("duplicate sensor ids")
    env.validate()
    t, temperature, co2 = env.generate(seed)
    for inst in instruments:
        inst.validate(int(t[0]), int(t[-1]))
    series = []
    for inst in instruments:
        eps = substream(seed, "sensor-noise", inst.sensor_id).standard_normal(len(t))
        ir = inst.ir_signal(t, temperature, co2, eps)
        sensor_co2 = estimate_co2(inst.calibration, temperature, ir) if inst.report_co2 else None
        series.append(
            SensorSeries(
                sensor_id=inst.sensor_id,
                timestamps=t,
                temperature=temperature,
                reference_co2=co2,
                ir_signal=ir,
                sensor_co2=sensor_co2,
                cadence=float(env.cadence),
            )
        )
    return Dataset.from_series(series)


def oracle_errors(
    instrument: InstrumentSpec, t: float, desired: UniformRectDensity, mc_samples: int, seed: int
) -> np.ndarray:
    """Estimator errors at time ``t`` for environments drawn from ``desired``."""
    if mc_samples < 1:
        raise InvalidSpec("mc_samples must be >= 1")
    rng = substream(seed, "oracle")
    pts = desired.sample(rng, mc_samples)
    eps = rng.standard_normal(mc_samples)
    ir = instrument.ir_signal(np.full(mc_samples, float(t)), pts[:, 0], pts[:, 1], eps)
    return np.asarray(estimate_co2(instrument.calibration, pts[:, 0], ir)) - pts[:, 1]


def oracle_instrumental_rmse(
    instrument: InstrumentSpec, t: float, desired: UniformRectDensity, mc_samples: int = 20000, seed: int = 0
) -> float:
    """Monte Carlo RMSE at time ``t`` with the environment frozen to ``desired``."""
    err = oracle_errors(instrument, t, desired, mc_samples, seed)
    return float(np.sqrt(np.mean(err * err)))


def monthly_oracle(
    instrument: InstrumentSpec,
    months: Sequence[MonthKey],
    desired: UniformRectDensity,
    mc_samples: int = 20000,
    seed: int = 0,
) -> dict[MonthKey, float]:
    """Oracle RMSE at each month's midpoint."""
    return {
        m: oracle_instrumental_rmse(instrument, m.midpoint, desired, mc_samples, seed) for m in months
    }


def dataset_months(dataset: Dataset) -> list[MonthKey]:
    first = next(iter(dataset.series.values()))
    return [MonthKey.from_index(int(m)) for m in np.unique(month_indices(first.timestamps))]


@dataclass(frozen=True)
class FleetSpec:
    environment: EnvironmentSpec = field(default_factory=EnvironmentSpec)
    instruments: tuple[InstrumentSpec, ...] = ()


def default_fleet(
    n_sensors: int = 12,
    seed: int = 42,
    env: EnvironmentSpec | None = None,
    *,
    drift: str = "linear",
    ir_noise: float = 5e-4,
    cold_coefficient: float = 1e-3,
) -> FleetSpec:
    """A fleet of sensors with randomized but seed-determined characteristics.

    Each sensor gets its own gain-drift slope (or random walk), a small
    calibration offset in ``i0`` and a cold-response coefficient spread
    around ``cold_coefficient``.
    """
    if n_sensors < 1:
        raise InvalidSpec("n_sensors must be >= 1")
    env = env or EnvironmentSpec()
    rng = substream(seed, "fleet-spec")
    instruments = []
    for k in range(n_sensors):
        sensor_id = f"{1090 + k}"
        true = BeerLambertParams(i0=1.0, alpha=1e-4)
        offset = rng.uniform(-2e-4, 2e-4)
        calibrated = replace(true, i0=true.i0 * (1.0 + offset))
        if drift == "linear":
            g = GainDrift("linear", slope_per_year=-rng.uniform(5e-4, 3e-3), origin=env.start)
        elif drift == "random_walk":
            g = GainDrift("random_walk", step_sigma=rng.uniform(1e-5, 5e-5), seed=int(rng.integers(2**63)), origin=env.start)
        elif drift == "none":
            g = GainDrift(origin=env.start)
        else:
            raise InvalidSpec(f"unknown drift kind {drift!r}")
        instruments.append(
            InstrumentSpec(
                sensor_id=sensor_id,
                true_params=true,
                calibrated_params=calibrated,
                drift=g,
                ir_noise=ir_noise,
                cold_coefficient=cold_coefficient * rng.uniform(0.5, 1.5),
            )
        )
    return FleetSpec(env, tuple(instruments))


def instrument_to_dict(inst: InstrumentSpec) -> dict:
    d = asdict(inst)
    d["true_params"] = inst.true_params.to_dict()
    d["calibrated_params"] = inst.calibration.to_dict()
    return d


def instrument_from_dict(data) -> InstrumentSpec:
    data = dict(data)
    kwargs = {}
    if "true_params" in data:
        kwargs["true_params"] = BeerLambertParams.from_dict(data.pop("true_params"))
    if data.get("calibrated_params") is not None:
        kwargs["calibrated_params"] = BeerLambertParams.from_dict(data.pop("calibrated_params"))
    data.pop("calibrated_params", None)
    if "drift" in data:
        kwargs["drift"] = GainDrift(**data.pop("drift"))
    try:
        return InstrumentSpec(**data, **kwargs)
    except TypeError as exc:
        raise InvalidSpec(str(exc)) from exc


def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset_csv(dataset: Dataset, out_dir) -> dict[str, Path]:
    """Write ``reference.csv`` and one ``sensor_<id>.csv`` per sensor.

    The reference channel is taken from the first sensor (all sensors in
    a simulated fleet share it). Returns the written paths by sensor id,
    plus the key ``"reference"``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ids = list(dataset.series)
    first = dataset[ids[0]]
    stamps = [format_timestamp(t) for t in first.timestamps.tolist()]
    paths = {"reference": out / "reference.csv"}
    with open(paths["reference"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "reference_co2"])
        w.writerows(zip(stamps, map(_fmt, first.reference_co2.tolist())))
    for sensor_id in ids:
        s = dataset[sensor_id]
        if not np.array_equal(s.timestamps, first.timestamps):
            stamps_s = [format_timestamp(t) for t in s.timestamps.tolist()]
        else:
            stamps_s = stamps
        header = ["timestamp", "temperature"]
        cols = [map(_fmt, s.temperature.tolist())]
        if s.ir_signal is not None:
            header.append("ir_signal")
            cols.append(map(_fmt, s.ir_signal.tolist()))
        if s.sensor_co2 is not None:
            header.append("sensor_co2")
            cols.append(map(_fmt, s.sensor_co2.tolist()))
        path = out / f"sensor_{sensor_id}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(zip(stamps_s, *cols))
        paths[sensor_id] = path
    return paths
