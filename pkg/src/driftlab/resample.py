"""Importance weighting and sampling-importance-resampling.

Weights are the ratio of the desired to the original environment density
at each point, normalized to sum to one; draws are taken with replacement
by inverting the cumulative normalized weights with uniforms from a
seeded Philox stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import Density, eval_density
from .errors import OriginalZeroAtPoint, ZeroWeightSum
from .model import SensorSeries
from .rng import substream


@dataclass(frozen=True, eq=False)
class WeightedSet:
    indices: np.ndarray
    raw: np.ndarray
    normalized: np.ndarray

    @classmethod
    def from_raw(cls, raw, indices=None) -> "WeightedSet":
        w = np.asarray(raw, dtype=float)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("raw weights must be finite and >= 0")
        total = w.sum()
        if not total > 0:
            raise ZeroWeightSum("all importance weights are zero")
        idx = np.arange(len(w)) if indices is None else np.asarray(indices, dtype="int64")
        return cls(idx, w, w / total)

    def __len__(self) -> int:
        return len(self.raw)


@dataclass(frozen=True)
class ResamplePlan:
    n: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("resample count must be >= 1")

    @property
    def replacement(self) -> bool:
        return True


def compute_weights(points, desired: Density, original: Density) -> WeightedSet:
    """``w_i = p_desired(x_i) / p_original(x_i)``, then normalized."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    num = eval_density(desired, pts[:, 0], pts[:, 1])
    den = eval_density(original, pts[:, 0], pts[:, 1])
    if np.any(den <= 0):
        bad = int(np.flatnonzero(den <= 0)[0])
        raise OriginalZeroAtPoint(f"original density is zero at point {bad}: {pts[bad].tolist()}")
    return WeightedSet.from_raw(num / den)


def draw_indices(weights: WeightedSet, plan: ResamplePlan) -> np.ndarray:
    """Source indices of ``plan.n`` i.i.d. categorical draws."""
    cdf = np.cumsum(weights.normalized)
    cdf[-1] = 1.0
    u = substream(plan.seed, "draws").random(plan.n)
    pos = np.searchsorted(cdf, u, side="right")
    # zero-weight cells have empty [cdf[i-1], cdf[i]) intervals so can't be hit
    return weights.indices[np.minimum(pos, len(cdf) - 1)]


def resample(source: SensorSeries, weights: WeightedSet, plan: ResamplePlan) -> SensorSeries:
    """Draw ``plan.n`` rows of ``source`` with probabilities ``weights.normalized``."""
    if len(weights) != len(source):
        raise ValueError("weights do not match the source series")
    return source.take(draw_indices(weights, plan))


def effective_sample_size(weights: WeightedSet) -> float:
    return float(1.0 / np.sum(weights.normalized**2))
