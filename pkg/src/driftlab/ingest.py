"""CSV ingestion, window averaging and outlier removal.

Preprocessing order follows the field protocol: raw streams are averaged
on a fixed window grid, windows lacking any required channel are dropped,
then high-quantile sensor readings are removed per sensor.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Iterator, Mapping

import numpy as np

from .errors import EmptyFile, EmptySeries, MalformedHeader, MissingColumn, NoOverlap
from .model import SensorSeries

TAGS = ("temperature", "ir_signal", "sensor_co2", "reference_co2")


@dataclass(frozen=True)
class RawRecord:
    timestamp: int
    value: float
    tag: str


@dataclass(frozen=True, eq=False)
class RawStream:
    """All raw samples of one channel: parallel timestamp/value arrays."""

    tag: str
    timestamps: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    def records(self) -> Iterator[RawRecord]:
        for t, v in zip(self.timestamps.tolist(), self.values.tolist()):
            yield RawRecord(t, v, self.tag)


@dataclass(frozen=True)
class ParsedCsv:
    streams: dict[str, RawStream]
    rows: int
    skipped: int


def parse_timestamp(text: str) -> int:
    """RFC 3339 / ISO 8601 (naive means UTC) or Unix epoch seconds."""
    text = text.strip()
    try:
        value = float(text)
    except ValueError:
        pass
    else:
        if not math.isfinite(value):
            raise ValueError(f"non-finite timestamp {text!r}")
        return math.floor(value)
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return math.floor(dt.timestamp())


def format_timestamp(ts: int) -> str:
    return datetime.fromtimestamp(int(ts), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _open_text(source) -> tuple[IO[str], bool]:
    if isinstance(source, (str, Path)):
        return open(source, newline="", encoding="utf-8"), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"), newline=""), True
    if isinstance(source, io.BufferedIOBase) or "b" in getattr(source, "mode", ""):
        return io.TextIOWrapper(source, encoding="utf-8", newline=""), False
    return source, False


def parse_csv(source, columns: Mapping[str, str], time_column: str = "timestamp") -> ParsedCsv:
    """Read mapped columns of a delimited file into raw streams.

    ``columns`` maps header names to channel tags. The delimiter (comma or
    tab) is detected from the header. A cell that is empty, unparseable or
    non-finite is dropped from its stream; a row with a bad timestamp is
    dropped entirely. ``skipped`` counts rows that lost at least one cell.
    """
    for name, tag in columns.items():
        if tag not in TAGS:
            raise ValueError(f"unknown tag {tag!r} for column {name!r}")
    fh, owned = _open_text(source)
    try:
        header_line = fh.readline()
        if not header_line:
            raise EmptyFile("file is empty")
        delimiter = "\t" if "\t" in header_line else ","
        header = [h.strip() for h in next(csv.reader([header_line], delimiter=delimiter))]
        if not header or any(h == "" for h in header) or len(set(header)) != len(header):
            raise MalformedHeader(f"bad header row: {header_line.strip()!r}")
        missing = [c for c in [time_column, *columns] if c not in header]
        if missing:
            raise MissingColumn(f"missing column(s): {', '.join(missing)}")
        t_pos = header.index(time_column)
        positions = [(header.index(name), tag) for name, tag in columns.items()]
        times: dict[str, list[int]] = {tag: [] for _, tag in positions}
        values: dict[str, list[float]] = {tag: [] for _, tag in positions}
        rows = skipped = 0
        for row in csv.reader(fh, delimiter=delimiter):
            if not row or all(not cell.strip() for cell in row):
                continue
            rows += 1
            try:
                ts = parse_timestamp(row[t_pos])
            except (ValueError, IndexError, OverflowError):
                skipped += 1
                continue
            bad = False
            for pos, tag in positions:
                try:
                    v = float(row[pos])
                except (ValueError, IndexError):
                    bad = True
                    continue
                if not math.isfinite(v):
                    bad = True
                    continue
                times[tag].append(ts)
                values[tag].append(v)
            skipped += bad
    finally:
        if owned:
            fh.close()
    streams = {
        tag: RawStream(tag, np.asarray(times[tag], dtype="int64"), np.asarray(values[tag], dtype=float))
        for _, tag in positions
    }
    return ParsedCsv(streams=streams, rows=rows, skipped=skipped)


def required_tags(tags) -> list[str]:
    tags = set(tags)
    if "temperature" not in tags or "reference_co2" not in tags:
        raise MissingColumn("streams must include temperature and reference_co2")
    if not tags & {"ir_signal", "sensor_co2"}:
        raise MissingColumn("streams must include ir_signal or sensor_co2")
    return [t for t in TAGS if t in tags]


def align_average(
    streams: Mapping[str, RawStream], window: int = 600, sensor_id: str = ""
) -> SensorSeries:
    """Average every channel on the half-open grid ``[k*w, (k+1)*w)``.

    Windows are anchored at Unix epoch multiples of ``window``; output
    timestamps are window starts. A window is kept only if every channel
    has at least one raw value in it.
    """
    if window <= 0:
        raise ValueError("window must be > 0")
    tags = required_tags(streams)
    means: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for tag in tags:
        s = streams[tag]
        k = np.floor_divide(s.timestamps, window)
        keys, first, inverse = np.unique(k, return_index=True, return_inverse=True)
        # accumulate deviations from each window's first value: exact for
        # constant windows and less cancellation for large offsets
        anchor = s.values[first]
        dev = np.bincount(inverse, weights=s.values - anchor[inverse], minlength=len(keys))
        counts = np.bincount(inverse, minlength=len(keys))
        means[tag] = (keys, anchor + dev / counts)
    common = means[tags[0]][0]
    for tag in tags[1:]:
        common = np.intersect1d(common, means[tag][0], assume_unique=True)
    if len(common) == 0:
        raise NoOverlap(f"no {window}s window has all of {', '.join(tags)}")
    cols = {}
    for tag in tags:
        keys, vals = means[tag]
        cols[tag] = vals[np.searchsorted(keys, common)]
    return SensorSeries(
        sensor_id=sensor_id,
        timestamps=common * window,
        temperature=cols["temperature"],
        reference_co2=cols["reference_co2"],
        ir_signal=cols.get("ir_signal"),
        sensor_co2=cols.get("sensor_co2"),
        cadence=float(window),
    )


def nearest_rank(values: np.ndarray, q: float) -> float:
    """Ascending-sorted value at rank ``ceil(q * n)`` (1-based, at least 1)."""
    values = np.sort(np.asarray(values, dtype=float))
    n = len(values)
    if n == 0:
        raise EmptySeries("no values")
    # round first so that e.g. 0.999 * 10000 lands on 9990, not 9990.000000000002
    rank = max(1, math.ceil(round(q * n, 9)))
    return float(values[min(rank, n) - 1])


def outlier_mask(series: SensorSeries, quantile: float) -> tuple[np.ndarray, str, float]:
    """Keep-mask, channel name and cutoff used by :func:`remove_outliers`."""
    if not 0 < quantile <= 1:
        raise ValueError("quantile must be in (0, 1]")
    if len(series) == 0:
        raise EmptySeries(f"series {series.sensor_id!r} is empty")
    if series.sensor_co2 is not None:
        cutoff = nearest_rank(series.sensor_co2, quantile)
        return series.sensor_co2 <= cutoff, "sensor_co2", cutoff
    # condensation inflates CO2 readings, i.e. deflates IR: apply the same
    # rule to the negated channel so the low tail is cut
    cutoff = -nearest_rank(-series.ir_signal, quantile)
    return series.ir_signal >= cutoff, "ir_signal", cutoff


def remove_outliers(series: SensorSeries, quantile: float = 0.999) -> SensorSeries:
    """Drop readings beyond the nearest-rank ``quantile`` cutoff (inclusive)."""
    keep, _, _ = outlier_mask(series, quantile)
    if keep.all():
        return series
    return series.select(keep)


def load_sensor(
    sensor_path,
    sensor_columns: Mapping[str, str],
    reference_path=None,
    reference_columns: Mapping[str, str] | None = None,
    *,
    sensor_id: str,
    window: int = 600,
    quantile: float = 0.999,
    time_column: str = "timestamp",
    reference_time_column: str = "timestamp",
) -> tuple[SensorSeries, dict]:
    """Full preprocessing of one sensor file against a reference file.

    Returns the cleaned series and a dict of counts for reporting.
    """
    parsed = parse_csv(sensor_path, sensor_columns, time_column)
    streams = dict(parsed.streams)
    stats = {"sensor_rows": parsed.rows, "sensor_skipped": parsed.skipped}
    if reference_path is not None:
        ref = parse_csv(reference_path, reference_columns or {"reference_co2": "reference_co2"}, reference_time_column)
        streams.update(ref.streams)
        stats.update(reference_rows=ref.rows, reference_skipped=ref.skipped)
    aligned = align_average(streams, window, sensor_id=sensor_id)
    cleaned = remove_outliers(aligned, quantile)
    stats.update(windows=len(aligned), outliers_removed=len(aligned) - len(cleaned), retained=len(cleaned))
    return cleaned, stats
