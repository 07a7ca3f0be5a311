"""Hourly station tables: ingestion, labels, time encoding and min-max scaling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import DomainError, LookupFailure, ParameterError, ParseError, SchemaError

HOUR = np.timedelta64(1, "h")

READINGS_HEADER = ("timestamp", "sensor_id", "parameter", "value")
EVENTS_HEADER = ("timestamp", "station_id", "count")

TIME_FEATURES = ("hour", "weekday", "month")


@dataclass(frozen=True)
class FeatureKind:
    kind: str = "continuous"
    n_classes: int | None = None

    def __post_init__(self):
        if self.kind not in ("continuous", "categorical"):
            raise ParameterError(f"unknown feature kind {self.kind!r}")
        if self.kind == "categorical" and (self.n_classes is None or self.n_classes < 2):
            raise ParameterError("categorical features need n_classes >= 2")

    @property
    def is_categorical(self):
        return self.kind == "categorical"

    def __str__(self):
        return f"categorical:{self.n_classes}" if self.is_categorical else "continuous"

    @classmethod
    def parse(cls, text: str) -> "FeatureKind":
        if text == "continuous":
            return CONTINUOUS
        if text.startswith("categorical:"):
            return cls("categorical", int(text.split(":", 1)[1]))
        raise ParameterError(f"unknown feature kind {text!r}")


CONTINUOUS = FeatureKind()
TIME_KINDS = {
    "hour": FeatureKind("categorical", 24),
    "weekday": FeatureKind("categorical", 7),
    "month": FeatureKind("categorical", 12),
}


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """Hourly feature matrix for one station.

    ``values[i, j]`` is meaningful only where ``missing[i, j]`` is False; masked
    cells hold NaN and must never be read as data. ``counts`` are raw event
    counts, ``labels`` the binary occurrence column (either may be absent).
    """

    station_id: str
    timestamps: np.ndarray
    names: tuple[str, ...]
    values: np.ndarray
    missing: np.ndarray
    kinds: Mapping[str, FeatureKind] = field(default_factory=dict)
    counts: np.ndarray | None = None
    labels: np.ndarray | None = None

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[h]")
        n = ts.shape[0]
        values = np.asarray(self.values, dtype=float).reshape(n, len(self.names))
        missing = np.asarray(self.missing, dtype=bool).reshape(values.shape)
        if len(set(self.names)) != len(self.names):
            raise SchemaError("duplicate feature names")
        if n > 1 and not np.all(np.diff(ts) == HOUR):
            raise SchemaError("timestamps must be strictly increasing with a 1-hour step")
        values = np.where(missing, np.nan, values)
        kinds = {name: self.kinds.get(name, CONTINUOUS) for name in self.names}
        object.__setattr__(self, "timestamps", _frozen(ts))
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "missing", _frozen(missing))
        object.__setattr__(self, "kinds", kinds)
        if self.counts is not None:
            counts = np.asarray(self.counts)
            if counts.shape != (n,):
                raise SchemaError("counts length differs from table length")
            object.__setattr__(self, "counts", _frozen(counts.astype(np.int64)))
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (n,):
                raise SchemaError("labels length differs from table length")
            if not np.isin(labels, (0, 1)).all():
                raise SchemaError("labels must be 0 or 1")
            object.__setattr__(self, "labels", _frozen(labels.astype(np.int8)))

    def __len__(self):
        return self.timestamps.shape[0]

    @property
    def n_features(self):
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"table for station {self.station_id!r} has no feature {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    def matrix(self, names: Sequence[str] | None = None) -> np.ndarray:
        """Dense float matrix of the requested columns (all by default)."""
        if names is None:
            return np.array(self.values)
        return self.values[:, [self.index(n) for n in names]]

    def rows(self, selector) -> "FeatureTable":
        """Sub-table on a contiguous slice or boolean mask of rows."""
        if isinstance(selector, slice):
            idx = selector
        else:
            sel = np.asarray(selector)
            if sel.dtype == bool:
                sel = np.flatnonzero(sel)
            if sel.size > 1 and not np.all(np.diff(self.timestamps[sel]) == HOUR):
                raise SchemaError("row selection must keep hourly contiguity")
            idx = sel
        return replace(
            self,
            timestamps=self.timestamps[idx],
            values=self.values[idx],
            missing=self.missing[idx],
            counts=None if self.counts is None else self.counts[idx],
            labels=None if self.labels is None else self.labels[idx],
        )

    def with_columns(self, columns: Mapping[str, np.ndarray], kinds=None, missing=None) -> "FeatureTable":
        """Return a copy with columns added or replaced."""
        kinds = dict(kinds or {})
        missing = dict(missing or {})
        names = list(self.names)
        values = [self.values[:, j] for j in range(self.n_features)]
        masks = [self.missing[:, j] for j in range(self.n_features)]
        all_kinds = dict(self.kinds)
        for name, col in columns.items():
            col = np.asarray(col, dtype=float)
            mask = np.asarray(missing.get(name, np.zeros(len(self), dtype=bool)))
            if name in names:
                j = names.index(name)
                values[j], masks[j] = col, mask
            else:
                names.append(name)
                values.append(col)
                masks.append(mask)
            all_kinds[name] = kinds.get(name, all_kinds.get(name, CONTINUOUS))
        return replace(
            self,
            names=tuple(names),
            values=np.column_stack(values) if values else np.empty((len(self), 0)),
            missing=np.column_stack(masks) if masks else np.empty((len(self), 0), dtype=bool),
            kinds=all_kinds,
        )

    def select(self, names: Sequence[str]) -> "FeatureTable":
        idx = [self.index(n) for n in names]
        return replace(
            self,
            names=tuple(names),
            values=self.values[:, idx],
            missing=self.missing[:, idx],
            kinds={n: self.kinds[n] for n in names},
        )

    def with_labels(self, labels=None) -> "FeatureTable":
        """Attach binary labels, derived from counts when none are given."""
        if labels is None:
            if self.counts is None:
                raise SchemaError("no counts to derive labels from")
            labels = binarize_labels(self.counts)
        return replace(self, labels=labels)

    def complete_rows(self) -> np.ndarray:
        return ~self.missing.any(axis=1)


# ---------------------------------------------------------------------------
# CSV ingestion


def read_csv_rows(path, header: Sequence[str]) -> Iterator[tuple[int, list[str]]]:
    """Yield ``(line_number, fields)`` after checking the header row."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "empty file") from None
        if tuple(h.strip() for h in first) != tuple(header):
            raise ParseError(path, 1, f"expected header {','.join(header)}, got {','.join(first)}")
        for fields in reader:
            if not fields:
                continue
            if len(fields) != len(header):
                raise ParseError(path, reader.line_num, f"expected {len(header)} fields, got {len(fields)}")
            yield reader.line_num, fields


_ts_cache: dict[str, np.datetime64] = {}


def parse_hour(text: str) -> np.datetime64:
    """Parse an ISO-8601 timestamp that falls exactly on an hour."""
    hit = _ts_cache.get(text)
    if hit is not None:
        return hit
    dt = datetime.fromisoformat(text.strip())
    if dt.minute or dt.second or dt.microsecond:
        raise ValueError(f"timestamp {text!r} is not on the hour")
    if dt.tzinfo is not None:
        raise ValueError(f"timestamp {text!r} carries a time zone")
    out = np.datetime64(dt.replace(tzinfo=None), "h")
    if len(_ts_cache) < 1_000_000:
        _ts_cache[text] = out
    return out


def format_hour(ts) -> str:
    return str(np.datetime64(ts, "h")) + ":00"


@dataclass
class Series:
    """One sensor parameter as read from disk (sparse in time)."""

    timestamps: np.ndarray
    values: np.ndarray
    missing: np.ndarray


def load_readings(path) -> dict[tuple[str, str], Series]:
    """Read readings.csv into per-(sensor, parameter) series.

    Within a series timestamps must be strictly increasing in file order.
    An empty value cell is kept as a missing observation.
    """
    raw: dict[tuple[str, str], tuple[list, list, list]] = {}
    for line, (ts, sensor, param, value) in read_csv_rows(path, READINGS_HEADER):
        try:
            t = parse_hour(ts)
        except ValueError as exc:
            raise ParseError(path, line, str(exc)) from None
        value = value.strip()
        if value:
            try:
                v, miss = float(value), False
            except ValueError:
                raise ParseError(path, line, f"bad value {value!r}") from None
            if not math.isfinite(v):
                raise ParseError(path, line, f"non-finite value {value!r}")
        else:
            v, miss = math.nan, True
        key = (sensor.strip(), param.strip())
        bucket = raw.setdefault(key, ([], [], []))
        if bucket[0] and t <= bucket[0][-1]:
            raise SchemaError(f"{path}:{line}: timestamps for {key} not strictly increasing")
        bucket[0].append(t)
        bucket[1].append(v)
        bucket[2].append(miss)
    return {
        k: Series(np.array(t, dtype="datetime64[h]"), np.array(v, dtype=float), np.array(m, dtype=bool))
        for k, (t, v, m) in raw.items()
    }


def load_events(path) -> dict[str, Series]:
    """Read events.csv into per-station count series (hours absent from the file count zero)."""
    raw: dict[str, tuple[list, list]] = {}
    for line, (ts, station, count) in read_csv_rows(path, EVENTS_HEADER):
        try:
            t = parse_hour(ts)
            c = int(count)
        except ValueError as exc:
            raise ParseError(path, line, str(exc)) from None
        if c < 0:
            raise ParseError(path, line, f"negative count {c}")
        bucket = raw.setdefault(station.strip(), ([], []))
        if bucket[0] and t <= bucket[0][-1]:
            raise SchemaError(f"{path}:{line}: timestamps for station {station!r} not strictly increasing")
        bucket[0].append(t)
        bucket[1].append(c)
    return {
        k: Series(np.array(t, dtype="datetime64[h]"), np.array(c, dtype=float), np.zeros(len(c), dtype=bool))
        for k, (t, c) in raw.items()
    }


def hourly_grid(start, stop) -> np.ndarray:
    """Inclusive hourly range."""
    return np.arange(np.datetime64(start, "h"), np.datetime64(stop, "h") + HOUR, HOUR)


def to_grid(series: Series, grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Place a sparse series on an hourly grid; hours without a reading are missing."""
    values = np.full(grid.shape[0], np.nan)
    missing = np.ones(grid.shape[0], dtype=bool)
    pos = ((series.timestamps - grid[0]) // HOUR).astype(np.int64)
    keep = (pos >= 0) & (pos < grid.shape[0])
    values[pos[keep]] = series.values[keep]
    missing[pos[keep]] = series.missing[keep]
    return values, missing


def load_feature_table(readings_path, events_path, station_id: str, sensors: Iterable[str] | None = None,
                       known_stations: Iterable[str] | None = None) -> FeatureTable:
    """Build the raw hourly table for one station.

    Columns are named ``sensor_id/parameter``. Missing readings stay masked for
    the spatial imputation step; event counts are attached un-binarized.
    """
    events = load_events(events_path)
    if known_stations is not None and station_id not in set(known_stations):
        raise LookupFailure(f"unknown station {station_id!r}")
    if station_id not in events and known_stations is None:
        raise LookupFailure(f"station {station_id!r} has no rows in {events_path}")
    readings = load_readings(readings_path)
    if sensors is not None:
        wanted = set(sensors)
        readings = {k: v for k, v in readings.items() if k[0] in wanted}
    ev = events.get(station_id, Series(np.array([], "datetime64[h]"), np.array([]), np.array([], bool)))
    stamps = [s.timestamps for s in readings.values() if s.timestamps.size] + ([ev.timestamps] if ev.timestamps.size else [])
    if not stamps:
        raise SchemaError(f"no data for station {station_id!r}")
    grid = hourly_grid(min(s[0] for s in stamps), max(s[-1] for s in stamps))
    cols, masks = {}, {}
    for (sensor, param) in sorted(readings):
        cols[f"{sensor}/{param}"], masks[f"{sensor}/{param}"] = to_grid(readings[(sensor, param)], grid)
    counts = np.zeros(grid.shape[0], dtype=np.int64)
    if ev.timestamps.size:
        pos = ((ev.timestamps - grid[0]) // HOUR).astype(np.int64)
        counts[pos] = ev.values.astype(np.int64)
    names = tuple(cols)
    values = np.column_stack([cols[n] for n in names]) if names else np.empty((grid.shape[0], 0))
    missing = np.column_stack([masks[n] for n in names]) if names else np.empty((grid.shape[0], 0), dtype=bool)
    return FeatureTable(station_id, grid, names, values, missing, counts=counts)


# ---------------------------------------------------------------------------
# Labels and station statistics


def binarize_labels(counts) -> np.ndarray:
    """1 where at least one event happened in the hour, else 0."""
    counts = np.asarray(counts)
    if counts.size and not np.all(np.equal(np.mod(counts, 1), 0)):
        raise DomainError("event counts must be integers")
    if np.any(counts < 0):
        raise DomainError("event counts must be non-negative")
    return (counts >= 1).astype(np.int8)


@dataclass(frozen=True)
class StationStats:
    station_id: str
    total_events: int
    pct_zero_hours: float
    pct_multi_hours: float
    n_hours: int = 0

    @property
    def pct_one_hours(self):
        return 1.0 - self.pct_zero_hours - self.pct_multi_hours


def station_stats(station_id: str, counts) -> StationStats:
    counts = np.asarray(counts, dtype=np.int64)
    n = counts.shape[0]
    if n == 0:
        return StationStats(station_id, 0, 0.0, 0.0, 0)
    zero = int(np.count_nonzero(counts == 0))
    multi = int(np.count_nonzero(counts > 1))
    return StationStats(station_id, int(counts.sum()), zero / n, multi / n, n)


def station_sort_key(station_id: str):
    """Numeric ids sort numerically, then everything else lexically."""
    s = str(station_id)
    return (0, int(s), s) if s.isdigit() else (1, 0, s)


def filter_stations(stats: Iterable[StationStats], threshold: float = 0.03) -> list[str]:
    """Keep stations whose share of multi-event hours is strictly below ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise ParameterError("threshold must lie in (0, 1)")
    kept = {s.station_id for s in stats if s.pct_multi_hours < threshold}
    return sorted(kept, key=station_sort_key)


# ---------------------------------------------------------------------------
# Time encoding and scaling


def encode_time(timestamp) -> tuple[float, float, float]:
    """(hour/23, weekday/6, month/11) with Monday = 0 and January = 0."""
    if not isinstance(timestamp, datetime):
        timestamp = np.datetime64(timestamp, "h").astype(datetime)
    return timestamp.hour / 23, timestamp.weekday() / 6, (timestamp.month - 1) / 11


def time_parts(timestamps) -> dict[str, np.ndarray]:
    """Integer hour (0-23), weekday (Mon=0) and month (Jan=0) per timestamp."""
    ts = np.asarray(timestamps, dtype="datetime64[h]")
    days = ts.astype("datetime64[D]")
    hour = (ts - days).astype(np.int64)
    # 1970-01-01 was a Thursday
    weekday = (days.astype(np.int64) + 3) % 7
    month = ts.astype("datetime64[M]").astype(np.int64) % 12
    return {"hour": hour, "weekday": weekday, "month": month}


def time_columns(timestamps) -> dict[str, np.ndarray]:
    parts = time_parts(timestamps)
    return {
        "hour": parts["hour"] / 23,
        "weekday": parts["weekday"] / 6,
        "month": parts["month"] / 11,
    }


def add_time_features(table: FeatureTable) -> FeatureTable:
    return table.with_columns(time_columns(table.timestamps), kinds=TIME_KINDS)


def class_index(values, kind: FeatureKind) -> np.ndarray:
    """Recover integer classes from a normalized categorical column."""
    return np.rint(np.asarray(values) * (kind.n_classes - 1)).astype(np.int64)


def normalize_minmax(table: FeatureTable, bounds: Mapping[str, tuple[float, float]] | None = None):
    """Rescale continuous columns to [0, 1].

    Bounds are computed from ``table`` unless given, in which case they are
    applied and the result clipped to [0, 1]. A constant column maps to zeros.
    Returns ``(table, bounds)``.
    """
    fitted = {} if bounds is None else dict(bounds)
    cols = {}
    for j, name in enumerate(table.names):
        if table.kinds[name].is_categorical:
            continue
        col = table.values[:, j]
        observed = ~table.missing[:, j]
        if bounds is None:
            if not observed.any():
                raise SchemaError(f"column {name!r} has no observed values")
            fitted[name] = (float(col[observed].min()), float(col[observed].max()))
        elif name not in fitted:
            raise SchemaError(f"no bounds for column {name!r}")
        lo, hi = fitted[name]
        if hi > lo:
            scaled = (col - lo) / (hi - lo)
        else:
            scaled = np.zeros_like(col)
        scaled = np.clip(scaled, 0.0, 1.0)
        cols[name] = np.where(observed, scaled, np.nan)
    out = table.with_columns(cols, missing={n: table.missing[:, table.index(n)] for n in cols})
    return out, fitted


def split_by_year(table: FeatureTable, eval_year: int | None = None):
    """Split into (train, eval): ``eval_year`` (default: the last calendar year) vs. the rest before it."""
    years = table.timestamps.astype("datetime64[Y]").astype(np.int64) + 1970
    if eval_year is None:
        eval_year = int(years[-1])
    is_eval = years == eval_year
    is_train = years < eval_year
    if not is_eval.any() or not is_train.any():
        raise SchemaError(f"split at {eval_year} leaves an empty train or eval part")
    return table.rows(is_train), table.rows(is_eval)
