"""Densities over the (temperature, reference CO2) plane.

:class:`HistogramDensity2D` is the empirical environment density of a set
of points; :class:`UniformRectDensity` is the fixed target environment.
Both evaluate pointwise through :func:`eval_density`. Cells and the
rectangle are half-open, ``[lo, hi)``, so a point on a shared edge
belongs to the cell above it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyInput


def _edges(values: np.ndarray, width: float) -> np.ndarray:
    lo = math.floor(values.min() / width)
    hi = math.floor(values.max() / width) + 1
    edges = np.arange(lo, hi + 1, dtype=float) * width
    # float division can land a value just outside the nominal grid
    while values.min() < edges[0]:
        edges = np.concatenate([[edges[0] - width], edges])
    while values.max() >= edges[-1]:
        edges = np.concatenate([edges, [edges[-1] + width]])
    return edges


def _cell_index(edges: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Cell index per value, -1 outside ``[edges[0], edges[-1])``."""
    idx = np.searchsorted(edges, x, side="right") - 1
    idx[(idx < 0) | (idx >= len(edges) - 1)] = -1
    return idx


@dataclass(frozen=True, eq=False)
class HistogramDensity2D:
    temp_edges: np.ndarray
    co2_edges: np.ndarray
    bin_prob: np.ndarray  # shape (len(temp_edges)-1, len(co2_edges)-1)

    def __post_init__(self):
        for name in ("temp_edges", "co2_edges", "bin_prob"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        for edges in (self.temp_edges, self.co2_edges):
            if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
                raise ValueError("edges must be strictly increasing with at least two entries")
        shape = (len(self.temp_edges) - 1, len(self.co2_edges) - 1)
        if self.bin_prob.shape != shape:
            raise ValueError(f"bin_prob shape {self.bin_prob.shape} != {shape}")
        if np.any(self.bin_prob < 0) or abs(self.bin_prob.sum() - 1.0) > 1e-9:
            raise ValueError("bin_prob must be non-negative and sum to 1")

    @property
    def cell_area(self) -> np.ndarray:
        return np.outer(np.diff(self.temp_edges), np.diff(self.co2_edges))

    @property
    def cell_density(self) -> np.ndarray:
        return self.bin_prob / self.cell_area

    def to_dict(self) -> dict:
        return {
            "kind": "histogram",
            "temp_edges": self.temp_edges.tolist(),
            "co2_edges": self.co2_edges.tolist(),
            "bin_prob": self.bin_prob.tolist(),
        }

    @classmethod
    def from_dict(cls, data) -> "HistogramDensity2D":
        return cls(np.asarray(data["temp_edges"]), np.asarray(data["co2_edges"]), np.asarray(data["bin_prob"]))


@dataclass(frozen=True)
class UniformRectDensity:
    temp_range: tuple[float, float] = (0.0, 20.0)
    co2_range: tuple[float, float] = (400.0, 500.0)

    def __post_init__(self):
        for name in ("temp_range", "co2_range"):
            lo, hi = (float(v) for v in getattr(self, name))
            if not lo < hi:
                raise ConfigError(f"{name} must satisfy lo < hi")
            object.__setattr__(self, name, (lo, hi))

    @property
    def area(self) -> float:
        return (self.temp_range[1] - self.temp_range[0]) * (self.co2_range[1] - self.co2_range[0])

    @property
    def value(self) -> float:
        return 1.0 / self.area

    def contains(self, temperature, co2) -> np.ndarray:
        t = np.asarray(temperature, dtype=float)
        c = np.asarray(co2, dtype=float)
        (t0, t1), (c0, c1) = self.temp_range, self.co2_range
        return (t >= t0) & (t < t1) & (c >= c0) & (c < c1)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` uniform draws as an (n, 2) array."""
        t = rng.uniform(*self.temp_range, size=n)
        c = rng.uniform(*self.co2_range, size=n)
        return np.column_stack([t, c])

    def to_dict(self) -> dict:
        return {"kind": "uniform", "temp_range": list(self.temp_range), "co2_range": list(self.co2_range)}

    @classmethod
    def from_dict(cls, data) -> "UniformRectDensity":
        return cls(tuple(data["temp_range"]), tuple(data["co2_range"]))


Density = HistogramDensity2D | UniformRectDensity


def density_from_dict(data) -> Density:
    kind = data.get("kind")
    if kind == "histogram":
        return HistogramDensity2D.from_dict(data)
    if kind == "uniform":
        return UniformRectDensity.from_dict(data)
    raise ValueError(f"unknown density kind {kind!r}")


def estimate_histogram(points, bin_widths: tuple[float, float] = (2.0, 10.0)) -> HistogramDensity2D:
    """Histogram estimate of the density of (temperature, co2) points.

    Edges sit on whole multiples of the bin widths and span the data; each
    cell holds ``count / n``.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise EmptyInput("cannot estimate a density from zero points")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    wt, wc = bin_widths
    if wt <= 0 or wc <= 0:
        raise ValueError("bin widths must be > 0")
    t_edges = _edges(pts[:, 0], wt)
    c_edges = _edges(pts[:, 1], wc)
    ti = _cell_index(t_edges, pts[:, 0])
    ci = _cell_index(c_edges, pts[:, 1])
    shape = (len(t_edges) - 1, len(c_edges) - 1)
    counts = np.bincount(ti * shape[1] + ci, minlength=shape[0] * shape[1]).reshape(shape)
    return HistogramDensity2D(t_edges, c_edges, counts / len(pts))


def eval_density(d: Density, temperature, co2):
    """Pointwise density value; zero outside the support."""
    scalar = np.ndim(temperature) == 0 and np.ndim(co2) == 0
    t = np.atleast_1d(np.asarray(temperature, dtype=float))
    c = np.atleast_1d(np.asarray(co2, dtype=float))
    t, c = np.broadcast_arrays(t, c)
    if isinstance(d, UniformRectDensity):
        out = np.where(d.contains(t, c), d.value, 0.0)
    else:
        ti = _cell_index(d.temp_edges, t.ravel())
        ci = _cell_index(d.co2_edges, c.ravel())
        inside = (ti >= 0) & (ci >= 0)
        out = np.zeros(t.size)
        out[inside] = d.cell_density[ti[inside], ci[inside]]
        out = out.reshape(t.shape)
    return float(out[0]) if scalar else out


def _overlap(edges: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return np.clip(np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo), 0.0, None)


def coverage_diagnostic(original: HistogramDensity2D, desired: UniformRectDensity) -> float:
    """Fraction of the desired rectangle's area lying in cells with mass > 0."""
    ot = _overlap(original.temp_edges, *desired.temp_range)
    oc = _overlap(original.co2_edges, *desired.co2_range)
    covered = np.outer(ot, oc)[original.bin_prob > 0].sum()
    return float(covered / desired.area)
