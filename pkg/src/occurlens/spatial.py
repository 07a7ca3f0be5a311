"""Station/sensor geometry and the gap-filling rules for sensor readings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import read_csv_rows, station_sort_key, time_parts
from .errors import AssignmentError, DegenerateInputError, ParameterError, ParseError, SchemaError

SENSOR_KINDS = ("weather", "traffic", "air")


@dataclass(frozen=True)
class Station:
    id: str
    name: str
    x: float
    y: float


@dataclass(frozen=True)
class Sensor:
    id: str
    kind: str
    x: float
    y: float


@dataclass
class StationCatalog:
    stations: list[Station]
    sensors: list[Sensor] = field(default_factory=list)
    # (station_id, point_id) -> seconds
    travel_time: dict[tuple[str, str], float] | None = None

    def __post_init__(self):
        for group, what in ((self.stations, "station"), (self.sensors, "sensor")):
            ids = [s.id for s in group]
            if len(set(ids)) != len(ids):
                raise SchemaError(f"duplicate {what} ids")
            for s in group:
                if not (math.isfinite(s.x) and math.isfinite(s.y)):
                    raise SchemaError(f"{what} {s.id!r} has non-finite coordinates")
        for s in self.sensors:
            if s.kind not in SENSOR_KINDS:
                raise SchemaError(f"sensor {s.id!r} has unknown kind {s.kind!r}")
        if self.travel_time:
            if any(v < 0 or not math.isfinite(v) for v in self.travel_time.values()):
                raise SchemaError("travel times must be finite and non-negative")

    def station(self, station_id: str) -> Station:
        for s in self.stations:
            if s.id == station_id:
                return s
        raise AssignmentError(f"unknown station {station_id!r}")

    def sensor(self, sensor_id: str) -> Sensor:
        for s in self.sensors:
            if s.id == sensor_id:
                return s
        raise AssignmentError(f"unknown sensor {sensor_id!r}")


def load_catalog(stations_path, sensors_path, travel_time_path=None) -> StationCatalog:
    stations = []
    for line, (sid, name, x, y) in read_csv_rows(stations_path, ("station_id", "name", "x_m", "y_m")):
        try:
            stations.append(Station(sid.strip(), name.strip(), float(x), float(y)))
        except ValueError as exc:
            raise ParseError(stations_path, line, str(exc)) from None
    sensors = []
    for line, (sid, kind, x, y) in read_csv_rows(sensors_path, ("sensor_id", "kind", "x_m", "y_m")):
        try:
            sensors.append(Sensor(sid.strip(), kind.strip(), float(x), float(y)))
        except ValueError as exc:
            raise ParseError(sensors_path, line, str(exc)) from None
    travel = None
    if travel_time_path is not None:
        travel = {}
        for line, (sid, pid, secs) in read_csv_rows(travel_time_path, ("station_id", "point_id", "seconds")):
            try:
                travel[(sid.strip(), pid.strip())] = float(secs)
            except ValueError as exc:
                raise ParseError(travel_time_path, line, str(exc)) from None
    return StationCatalog(stations, sensors, travel)


def write_catalog(catalog: StationCatalog, out_dir) -> None:
    out_dir = Path(out_dir)
    with (out_dir / "stations.csv").open("w", encoding="utf-8", newline="") as fh:
        fh.write("station_id,name,x_m,y_m\n")
        for s in catalog.stations:
            fh.write(f"{s.id},{s.name},{s.x!r},{s.y!r}\n")
    with (out_dir / "sensors.csv").open("w", encoding="utf-8", newline="") as fh:
        fh.write("sensor_id,kind,x_m,y_m\n")
        for s in catalog.sensors:
            fh.write(f"{s.id},{s.kind},{s.x!r},{s.y!r}\n")


def assign_nearest(point, catalog: StationCatalog, metric: str = "euclidean") -> str:
    """Station closest to ``point``.

    For ``metric="euclidean"`` the point is an ``(x, y)`` pair; for
    ``"travel_time"`` it is a point id looked up in the catalog's matrix.
    Ties go to the smallest station id.
    """
    if not catalog.stations:
        raise AssignmentError("catalog has no stations")
    if metric == "euclidean":
        px, py = point
        cost = {s.id: math.hypot(s.x - px, s.y - py) for s in catalog.stations}
    elif metric == "travel_time":
        if catalog.travel_time is None:
            raise AssignmentError("travel_time metric needs a travel-time matrix")
        cost = {}
        for s in catalog.stations:
            secs = catalog.travel_time.get((s.id, point))
            if secs is not None:
                cost[s.id] = secs
        if not cost:
            raise AssignmentError(f"point {point!r} is unreachable from every station")
    else:
        raise ParameterError(f"unknown metric {metric!r}")
    best = min(cost.values())
    return min((sid for sid, c in cost.items() if c == best), key=station_sort_key)


def weights_from_distances(distances, s: float = 3.0, inverse: bool = True) -> np.ndarray:
    """Normalized distance weights.

    ``inverse=True`` weights by d**-s, so larger ``s`` favours nearer sensors;
    a sensor at distance 0 then takes all the weight (split evenly if several).
    ``inverse=False`` weights by d**s as the formula is literally printed.
    """
    if not s > 0:
        raise ParameterError("exponent s must be positive")
    d = np.asarray(distances, dtype=float)
    if d.ndim != 1 or d.size == 0:
        raise ParameterError("need at least one distance")
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise ParameterError("distances must be finite and non-negative")
    if inverse:
        zero = d == 0
        if zero.any():
            return zero / zero.sum()
        # log-space keeps large s from under/overflowing
        logw = -s * (np.log(d) - np.log(d.min()))
    else:
        if np.all(d == 0):
            return np.full(d.size, 1.0 / d.size)
        with np.errstate(divide="ignore"):
            logw = s * (np.log(d) - np.log(d.max()))
    w = np.exp(logw)
    return w / w.sum()


def idw_weights(target: Station, sensors: Sequence[Sensor], s: float = 3.0, inverse: bool = True) -> np.ndarray:
    if not sensors:
        raise ParameterError("need at least one sensor")
    d = [math.hypot(x.x - target.x, x.y - target.y) for x in sensors]
    return weights_from_distances(d, s, inverse)


def impute_weighted(values, missing, weights):
    """Weighted average across sensors, renormalizing over those reporting each hour.

    ``values``/``missing`` are (n_sensors, n_hours). Hours where every sensor is
    missing stay missing. Returns ``(series, missing_mask)``.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    missing = np.atleast_2d(np.asarray(missing, dtype=bool))
    w = np.asarray(weights, dtype=float)
    if values.shape != missing.shape or w.shape != (values.shape[0],):
        raise SchemaError("weights, values and masks must align")
    present = ~missing
    wmat = w[:, None] * present
    total = wmat.sum(axis=0)
    out_missing = total <= 0
    num = np.where(present, values, 0.0) * wmat
    with np.errstate(invalid="ignore", divide="ignore"):
        out = num.sum(axis=0) / total
    out[out_missing] = np.nan
    return out, out_missing


def _pearson(a, b):
    sa, sb = a.std(), b.std()
    if a.size < 2 or sa == 0 or sb == 0:
        return float("nan")
    return float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))


@dataclass
class TrafficFill:
    values: np.ndarray
    source: str  # "none", "rescaled:<index>", or "seasonal"
    correlation: float = float("nan")
    slope: float = float("nan")
    intercept: float = float("nan")


def impute_traffic(target, target_missing, candidates: Sequence[tuple], timestamps,
                   corr_threshold: float = 0.95) -> TrafficFill:
    """Fill gaps in a road-count series.

    If some candidate road correlates with the target above ``corr_threshold``
    (on hours both observe), gaps take that road's values through a
    least-squares affine fit. Otherwise, or where the chosen road is itself
    missing, gaps take the mean of observed target values in the same
    (weekday, hour) cell, then the global mean.
    """
    target = np.asarray(target, dtype=float)
    miss = np.asarray(target_missing, dtype=bool)
    if target.size == 0:
        raise DegenerateInputError("empty target series")
    observed = ~miss
    if not observed.any():
        raise DegenerateInputError("target series has no observed values")
    if not miss.any():
        return TrafficFill(target.copy(), "none")

    best = None
    for k, (cand, cand_missing) in enumerate(candidates):
        cand = np.asarray(cand, dtype=float)
        joint = observed & ~np.asarray(cand_missing, dtype=bool)
        r = _pearson(target[joint], cand[joint])
        if math.isfinite(r) and r > corr_threshold and (best is None or r > best[1]):
            best = (k, r)

    out = target.copy()
    fill = TrafficFill(out, "seasonal")
    still = miss.copy()
    if best is not None:
        k, r = best
        cand = np.asarray(candidates[k][0], dtype=float)
        cmiss = np.asarray(candidates[k][1], dtype=bool)
        joint = observed & ~cmiss
        cx, ty = cand[joint], target[joint]
        slope = np.mean((cx - cx.mean()) * (ty - ty.mean())) / np.var(cx)
        intercept = ty.mean() - slope * cx.mean()
        usable = miss & ~cmiss
        out[usable] = slope * cand[usable] + intercept
        still = miss & cmiss
        fill = TrafficFill(out, f"rescaled:{k}", r, float(slope), float(intercept))
    if still.any():
        out[still] = seasonal_means(target, miss, timestamps)[still]
    return fill


def seasonal_means(values, missing, timestamps) -> np.ndarray:
    """Per-row mean of observed values sharing the row's (weekday, hour) cell.

    Cells with no observation fall back to the global observed mean.
    """
    parts = time_parts(timestamps)
    cell = parts["weekday"] * 24 + parts["hour"]
    obs = ~np.asarray(missing, dtype=bool)
    values = np.asarray(values, dtype=float)
    sums = np.bincount(cell[obs], weights=values[obs], minlength=168)
    cnts = np.bincount(cell[obs], minlength=168)
    global_mean = values[obs].mean()
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(cnts > 0, sums / np.maximum(cnts, 1), global_mean)
    return means[cell]


def fill_daily(daily_values, daily_missing=None) -> np.ndarray:
    """Expand one value per day to 24 hourly values.

    A missing day repeats the most recent observed day; days before the first
    observation take the first observed value.
    """
    v = np.asarray(daily_values, dtype=float)
    if v.size == 0:
        raise DegenerateInputError("empty daily series")
    m = np.isnan(v) if daily_missing is None else np.asarray(daily_missing, dtype=bool)
    obs = np.flatnonzero(~m)
    if obs.size == 0:
        raise DegenerateInputError("daily series has no observed day")
    idx = np.where(~m, np.arange(v.size), 0)
    idx = np.maximum.accumulate(idx)
    idx[: obs[0]] = obs[0]
    return np.repeat(v[idx], 24)


def nearest_sensor(target: Station, sensors: Sequence[Sensor]) -> Sensor:
    """Closest sensor by Euclidean distance, ties to the smallest id."""
    if not sensors:
        raise AssignmentError("no sensors to choose from")
    dist = [(math.hypot(s.x - target.x, s.y - target.y), station_sort_key(s.id), s) for s in sensors]
    return min(dist, key=lambda t: (t[0], t[1]))[2]


def station_sensors(catalog: StationCatalog, available: Mapping[str, set[str]], kind: str) -> dict[str, list[Sensor]]:
    """Group sensors of ``kind`` by the parameters they report (``available``: sensor id -> parameters)."""
    out: dict[str, list[Sensor]] = {}
    for s in catalog.sensors:
        if s.kind != kind:
            continue
        for p in sorted(available.get(s.id, ())):
            out.setdefault(p, []).append(s)
    return out
