"""Temperature-compensated Beer-Lambert estimator for NDIR CO2 sensors.

The forward model attenuates a reference intensity ``i0`` by the absorber
optical density, scaled by ``t_ref / T_K`` to follow the ideal-gas number
density at fixed pressure::

    x_I = i0 * exp(-alpha * y * t_ref / T_K)

and :func:`estimate_co2` inverts it. The vendor's actual compensation
polynomial is proprietary; this form is a stand-in with the same inputs.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ConfigError, DegenerateWindow, NonPhysicalTemperature, NonPositiveIr
from .model import SensorSeries

KELVIN = 273.15
DEFAULT_T_REF = 293.15


@dataclass(frozen=True)
class BeerLambertParams:
    i0: float
    alpha: float
    t_ref: float = DEFAULT_T_REF

    def __post_init__(self):
        for name in ("i0", "alpha", "t_ref"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be finite and > 0, got {value!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data) -> "BeerLambertParams":
        return cls(float(data["i0"]), float(data["alpha"]), float(data.get("t_ref", DEFAULT_T_REF)))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def load(cls, path) -> "BeerLambertParams":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps() + "\n")


def _kelvin(temperature):
    t_k = np.asarray(temperature, dtype=float) + KELVIN
    if np.any(t_k <= 0):
        raise NonPhysicalTemperature("absolute temperature must be > 0 K")
    return t_k


def _scalar_or_array(value, *inputs):
    if all(np.ndim(x) == 0 for x in inputs):
        return float(value)
    return value


def estimate_co2(params: BeerLambertParams, temperature, ir_signal, diagnostics: Counter | None = None):
    """Invert the forward model: CO2 in ppm from temperature (degC) and IR.

    Negative concentrations (IR above ``i0``) are clamped to zero; the
    number of clamped values is added to ``diagnostics["clamped_negative"]``
    when a counter is supplied.
    """
    ir = np.asarray(ir_signal, dtype=float)
    if np.any(ir <= 0):
        raise NonPositiveIr("ir_signal must be > 0")
    t_k = _kelvin(temperature)
    y = -np.log(ir / params.i0) * (t_k / params.t_ref) / params.alpha
    negative = y < 0
    if diagnostics is not None:
        diagnostics["clamped_negative"] += int(np.count_nonzero(negative))
    y = np.where(negative, 0.0, y)
    return _scalar_or_array(y, temperature, ir_signal)


def forward_ir(params: BeerLambertParams, temperature, co2):
    """IR intensity seen by the detector for ``co2`` ppm at ``temperature`` degC."""
    y = np.asarray(co2, dtype=float)
    if np.any(y < 0):
        raise ValueError("co2 must be >= 0")
    t_k = _kelvin(temperature)
    x = params.i0 * np.exp(-params.alpha * y * params.t_ref / t_k)
    return _scalar_or_array(x, temperature, co2)


def passthrough_estimator(sensor_co2, diagnostics: Counter | None = None):
    """Identity estimator for data that already carries sensor CO2.

    Negative readings are returned unchanged and counted in
    ``diagnostics["negative_passthrough"]``.
    """
    y = np.asarray(sensor_co2, dtype=float)
    if diagnostics is not None:
        diagnostics["negative_passthrough"] += int(np.count_nonzero(y < 0))
    return _scalar_or_array(y.copy(), sensor_co2)


def fit_params(window: Iterable[tuple[float, float, float]], t_ref: float = DEFAULT_T_REF) -> BeerLambertParams:
    """Least-squares calibration from (temperature, ir_signal, reference_co2).

    Regresses ``ln x_I`` on ``y * t_ref / T_K``; the intercept gives
    ``ln i0`` and the negated slope gives ``alpha``.
    """
    data = np.asarray(list(window), dtype=float).reshape(-1, 3)
    if len(data) < 3:
        raise DegenerateWindow("need at least 3 points to fit")
    temperature, ir, ref = data.T
    if np.any(ir <= 0):
        raise NonPositiveIr("ir_signal must be > 0")
    if len(np.unique(ref)) < 2:
        raise DegenerateWindow("need at least two distinct reference concentrations")
    x = ref * t_ref / _kelvin(temperature)
    z = np.log(ir)
    # centred normal equations; sums taken over sorted values so that the
    # result does not depend on input order
    order = np.lexsort((z, x))
    x, z = x[order], z[order]
    x_mean, z_mean = x.mean(), z.mean()
    dx = x - x_mean
    sxx = float(np.dot(dx, dx))
    if sxx <= 1e-12 * max(1.0, float(np.dot(x, x))):
        raise DegenerateWindow("regressor has no spread")
    slope = float(np.dot(dx, z - z_mean)) / sxx
    intercept = z_mean - slope * x_mean
    if slope >= 0:
        raise DegenerateWindow(f"fitted absorption coefficient is not positive (slope={slope:.3g})")
    return BeerLambertParams(i0=float(np.exp(intercept)), alpha=-slope, t_ref=t_ref)


class BeerLambertEstimator:
    """Callable mapping a series to CO2 estimates via :func:`estimate_co2`."""

    mode = "beer-lambert"

    def __init__(self, params: BeerLambertParams):
        self.params = params

    def __call__(self, series: SensorSeries, diagnostics: Counter | None = None) -> np.ndarray:
        if series.ir_signal is None:
            raise ConfigError(f"series {series.sensor_id!r} has no ir_signal for the Beer-Lambert estimator")
        return np.asarray(estimate_co2(self.params, series.temperature, series.ir_signal, diagnostics))

    def describe(self) -> dict:
        return {"mode": self.mode, "params": self.params.to_dict()}


class PassthroughEstimator:
    """Callable returning the series' own sensor CO2 channel."""

    mode = "passthrough"

    def __call__(self, series: SensorSeries, diagnostics: Counter | None = None) -> np.ndarray:
        if series.sensor_co2 is None:
            raise ConfigError(f"series {series.sensor_id!r} has no sensor_co2 for the passthrough estimator")
        return np.asarray(passthrough_estimator(series.sensor_co2, diagnostics))

    def describe(self) -> dict:
        return {"mode": self.mode}
