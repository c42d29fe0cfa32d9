"""Run configuration: TOML file, ``DRIFTLAB_*`` environment, CLI flags.

Precedence is flags > environment > file > defaults. Relative paths in a
config file are resolved against the file's directory but reported as
written, so reports do not depend on where a run was started from.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .ingest import TAGS
from .model import EvalConfig

ENV_PREFIX = "DRIFTLAB_"
FORMATS = ("json", "csv")


@dataclass(frozen=True)
class SourceSpec:
    path: str
    columns: dict[str, str]
    time_column: str = "timestamp"

    @classmethod
    def from_mapping(cls, data: Mapping, what: str) -> "SourceSpec":
        if "path" not in data:
            raise ConfigError(f"{what}: missing 'path'")
        columns = dict(data.get("columns", {}))
        for name, tag in columns.items():
            if tag not in TAGS:
                raise ConfigError(f"{what}: column {name!r} maps to unknown tag {tag!r}")
        return cls(str(data["path"]), columns, str(data.get("time_column", "timestamp")))

    def to_dict(self) -> dict:
        return {"path": self.path, "time_column": self.time_column, "columns": dict(self.columns)}


@dataclass(frozen=True)
class SensorSource(SourceSpec):
    sensor_id: str = ""
    params: str | None = None

    def to_dict(self) -> dict:
        return {"id": self.sensor_id, **super().to_dict(), "params": self.params}


@dataclass(frozen=True)
class EstimatorConfig:
    mode: str = "beer-lambert"
    params: str | None = None
    fit_days: float = 0.0

    def __post_init__(self):
        if self.mode not in ("beer-lambert", "passthrough"):
            raise ConfigError(f"unknown estimator mode {self.mode!r}")
        if self.fit_days < 0:
            raise ConfigError("fit_days must be >= 0")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "params": self.params, "fit_days": self.fit_days}


@dataclass(frozen=True)
class RunConfig:
    eval: EvalConfig = field(default_factory=EvalConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    sensors: tuple[SensorSource, ...] = ()
    reference: SourceSpec | None = None
    formats: tuple[str, ...] = FORMATS
    out: str = "out"
    jobs: int = 1
    simulate: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def check_paths(self) -> None:
        missing = []
        for src in [*self.sensors, *([self.reference] if self.reference else [])]:
            if not self.resolve(src.path).is_file():
                missing.append(src.path)
        for s in self.sensors:
            if s.params and not self.resolve(s.params).is_file():
                missing.append(s.params)
        if self.estimator.params and not self.resolve(self.estimator.params).is_file():
            missing.append(self.estimator.params)
        if missing:
            raise ConfigError(f"input file(s) not found: {', '.join(missing)}")

    def to_dict(self) -> dict:
        """Resolved settings that determine outputs (not ``out`` or ``jobs``)."""
        return {
            "eval": self.eval.to_dict(),
            "estimator": self.estimator.to_dict(),
            "reference": self.reference.to_dict() if self.reference else None,
            "sensors": [s.to_dict() for s in self.sensors],
            "formats": list(self.formats),
            "outlier_scope": "per-sensor",
        }


def _env_overrides(environ: Mapping[str, str]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key in ("SEED", "JOBS", "OUT", "FORMAT", "CONFIG"):
        value = environ.get(ENV_PREFIX + key)
        if value not in (None, ""):
            out[key.lower()] = value
    return out


def parse_formats(value) -> tuple[str, ...]:
    items = value.split(",") if isinstance(value, str) else list(value)
    formats = tuple(dict.fromkeys(str(v).strip().lower() for v in items if str(v).strip()))
    if not formats:
        raise ConfigError("at least one output format is required")
    bad = [f for f in formats if f not in FORMATS]
    if bad:
        raise ConfigError(f"unknown format(s): {bad}")
    return formats


def _parse_int(value, name: str, lo: int, hi: int | None = None) -> int:
    try:
        v = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be an integer, got {value!r}") from None
    if v < lo or (hi is not None and v > hi):
        raise ConfigError(f"{name} out of range: {v}")
    return v


def load_config(
    path: str | os.PathLike | None = None,
    *,
    seed=None,
    jobs=None,
    out=None,
    formats=None,
    environ: Mapping[str, str] | None = None,
) -> RunConfig:
    environ = os.environ if environ is None else environ
    env = _env_overrides(environ)
    path = path or env.get("config")
    data: dict = {}
    base = Path(".")
    if path is not None:
        p = Path(path)
        try:
            data = tomllib.loads(p.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {p}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid config {p}: {exc}") from None
        base = p.parent

    def pick(flag, env_key, file_key, default):
        if flag is not None:
            return flag
        if env_key in env:
            return env[env_key]
        return data.get(file_key, default)

    seed_v = _parse_int(pick(seed, "seed", "seed", 0), "seed", 0, 2**64 - 1)
    jobs_v = _parse_int(pick(jobs, "jobs", "jobs", 1), "jobs", 1)
    formats_v = parse_formats(pick(formats, "format", "formats", FORMATS))
    out_v = str(pick(out, "out", "out", "out"))

    eval_data = dict(data.get("eval", {}))
    eval_data.pop("rng_seed", None)
    try:
        eval_cfg = EvalConfig.from_mapping(eval_data, rng_seed=seed_v)
    except TypeError as exc:
        raise ConfigError(f"invalid [eval] section: {exc}") from None

    est = data.get("estimator", {})
    estimator = EstimatorConfig(
        mode=str(est.get("mode", "beer-lambert")),
        params=est.get("params"),
        fit_days=float(est.get("fit_days", 0.0)),
    )
    sensors = []
    for i, s in enumerate(data.get("sensors", [])):
        if "id" not in s:
            raise ConfigError(f"sensors[{i}]: missing 'id'")
        base_spec = SourceSpec.from_mapping(s, f"sensor {s['id']}")
        sensors.append(
            SensorSource(
                path=base_spec.path,
                columns=base_spec.columns,
                time_column=base_spec.time_column,
                sensor_id=str(s["id"]),
                params=s.get("params"),
            )
        )
    ids = [s.sensor_id for s in sensors]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate sensor ids in config")
    reference = SourceSpec.from_mapping(data["reference"], "reference") if "reference" in data else None
    return RunConfig(
        eval=eval_cfg,
        estimator=estimator,
        sensors=tuple(sensors),
        reference=reference,
        formats=formats_v,
        out=out_v,
        jobs=jobs_v,
        simulate=dict(data.get("simulate", {})),
        base_dir=base,
    )


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, Mapping):
        return "{ " + ", ".join(f"{_toml_value(str(k))} = {_toml_value(x)}" for k, x in v.items()) + " }"
    raise TypeError(f"cannot encode {v!r}")


def dump_evaluate_config(
    seed: int,
    sensors: list[dict],
    reference: dict | None,
    eval_settings: Mapping | None = None,
    estimator: Mapping | None = None,
) -> str:
    """Render an evaluation config document (the subset this package writes)."""
    lines = [f"seed = {seed}", 'formats = ["json", "csv"]', ""]
    if eval_settings:
        lines.append("[eval]")
        lines += [f"{k} = {_toml_value(v)}" for k, v in eval_settings.items()]
        lines.append("")
    lines.append("[estimator]")
    lines += [f"{k} = {_toml_value(v)}" for k, v in (estimator or {"mode": "beer-lambert"}).items() if v is not None]
    lines.append("")
    if reference:
        lines.append("[reference]")
        lines += [f"{k} = {_toml_value(v)}" for k, v in reference.items()]
        lines.append("")
    for s in sensors:
        lines.append("[[sensors]]")
        lines += [f"{k} = {_toml_value(v)}" for k, v in s.items() if v is not None]
        lines.append("")
    return "\n".join(lines)
