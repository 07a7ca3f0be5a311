"""Synthetic stations with a known hour-driven event rate.

Labels are hourly Bernoulli draws whose probability depends only on the hour
of day, so the best achievable ranking, and therefore the Bayes AUC, is known
exactly. Covariates come in four families: a noisy copy of the hourly rate
(road-like), i.i.d. noise, AR(1) noise (weather-like) and one-value-per-day
noise (air-like).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .data import TIME_KINDS, FeatureTable, HOUR, format_hour, time_columns, time_parts
from .errors import ParameterError
from .spatial import Sensor, Station, StationCatalog, write_catalog

COVARIATE_KINDS = ("diurnal", "iid", "ar1", "daily")
SENSOR_KIND_OF = {"diurnal": "traffic", "iid": "weather", "ar1": "weather", "daily": "air"}


def diurnal_profile(base: float = 0.05, amplitude: float = 0.25) -> np.ndarray:
    """base + amplitude * max(0, sin(pi (h - 6) / 12)): flat at night, one bump peaking at noon."""
    h = np.arange(24)
    return base + amplitude * np.maximum(0.0, np.sin(np.pi * (h - 6) / 12))


@dataclass(frozen=True)
class CovariateSpec:
    name: str
    kind: str
    coupling: float = 1.0
    sigma: float = 1.0
    rho: float = 0.0

    def __post_init__(self):
        if self.kind not in COVARIATE_KINDS:
            raise ParameterError(f"unknown covariate kind {self.kind!r}")
        if self.sigma < 0:
            raise ParameterError(f"covariate {self.name!r}: sigma must be >= 0")
        if not abs(self.rho) < 1:
            raise ParameterError(f"covariate {self.name!r}: |rho| must be < 1")
        if self.name in TIME_KINDS:
            raise ParameterError(f"covariate name {self.name!r} clashes with a time feature")


@dataclass(frozen=True)
class Scenario:
    n_hours: int
    lambda_profile: tuple[float, ...]
    covariates: tuple[CovariateSpec, ...] = ()
    seed: int = 0
    start: str = "2015-01-01T00"
    n_stations: int = 1
    missing_rate: float = 0.0

    def __post_init__(self):
        lam = tuple(float(v) for v in self.lambda_profile)
        object.__setattr__(self, "lambda_profile", lam)
        object.__setattr__(self, "covariates", tuple(
            c if isinstance(c, CovariateSpec) else CovariateSpec(**c) for c in self.covariates))
        if len(lam) != 24:
            raise ParameterError("lambda profile needs 24 hourly values")
        if any(not (0.0 <= v <= 1.0) for v in lam):
            raise ParameterError("lambda values must lie in [0, 1]")
        if self.n_hours < 1 or self.n_stations < 1:
            raise ParameterError("n_hours and n_stations must be positive")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ParameterError("missing_rate must lie in [0, 1)")
        names = [c.name for c in self.covariates]
        if len(set(names)) != len(names):
            raise ParameterError("covariate names must be unique")
        if np.datetime64(self.start, "h") != np.datetime64(self.start, "D"):
            raise ParameterError("scenario must start at midnight")

    @property
    def lam(self) -> np.ndarray:
        return np.asarray(self.lambda_profile)

    def station_ids(self) -> list[str]:
        return [f"S{i + 1}" for i in range(self.n_stations)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda_profile"] = list(self.lambda_profile)
        d["covariates"] = [asdict(c) for c in self.covariates]
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Scenario":
        d = dict(d)
        if d.get("lambda_profile") == "default" or "lambda_profile" not in d:
            d["lambda_profile"] = tuple(diurnal_profile())
        d.setdefault("n_hours", 52_560)
        if "covariates" not in d:
            d["covariates"] = default_covariates()
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown scenario keys: {', '.join(sorted(unknown))}")
        d["covariates"] = tuple(CovariateSpec(**c) if isinstance(c, Mapping) else c for c in d["covariates"])
        return cls(**d)


def default_covariates() -> tuple[CovariateSpec, ...]:
    return (
        CovariateSpec("road", "diurnal", coupling=1.0, sigma=0.05),
        *(CovariateSpec(f"noise_{i}", "iid", sigma=1.0) for i in range(1, 6)),
        CovariateSpec("weather", "ar1", sigma=1.0, rho=0.9),
        CovariateSpec("air", "daily", sigma=1.0),
    )


def default_scenario(seed: int = 0, n_hours: int = 52_560, n_stations: int = 1) -> Scenario:
    """Six years of hourly data with the diurnal bump profile and one covariate of each family."""
    return Scenario(n_hours, tuple(diurnal_profile()), default_covariates(), seed, n_stations=n_stations)


def _rng(scenario: Scenario, station_index: int, stream: int = 0):
    return np.random.default_rng(np.random.SeedSequence([scenario.seed, station_index, stream]))


def _covariate(spec: CovariateSpec, rng, lam_t, n_days):
    n = lam_t.size
    if spec.kind == "diurnal":
        return spec.coupling * lam_t + rng.normal(0.0, spec.sigma, n) if spec.sigma else spec.coupling * lam_t
    if spec.kind == "iid":
        return rng.normal(0.0, spec.sigma, n)
    if spec.kind == "ar1":
        eps = rng.normal(0.0, spec.sigma, n)
        out = np.empty(n)
        out[0] = eps[0] / math.sqrt(1 - spec.rho ** 2)
        for t in range(1, n):
            out[t] = spec.rho * out[t - 1] + eps[t]
        return out
    daily = rng.normal(0.0, spec.sigma, n_days)
    return np.repeat(daily, 24)[:n]


def generate(scenario: Scenario, station_index: int = 0) -> FeatureTable:
    """Labelled table for one synthetic station: time columns (normalized) plus raw covariates."""
    ts = np.datetime64(scenario.start, "h") + np.arange(scenario.n_hours) * HOUR
    hour = time_parts(ts)["hour"]
    lam_t = scenario.lam[hour]
    rng = _rng(scenario, station_index)
    labels = (rng.random(scenario.n_hours) < lam_t).astype(np.int8)
    n_days = -(-scenario.n_hours // 24)
    cols = dict(time_columns(ts))
    for spec in scenario.covariates:
        cols[spec.name] = _covariate(spec, rng, lam_t, n_days)
    names = tuple(cols)
    values = np.column_stack([cols[n] for n in names])
    sid = scenario.station_ids()[station_index]
    return FeatureTable(sid, ts, names, values, np.zeros(values.shape, dtype=bool),
                        kinds=TIME_KINDS, counts=labels, labels=labels)


def bayes_auc(lambda_profile) -> float:
    """AUC of scoring each hour by its own rate, by exact enumeration over hour pairs.

    A positive falls in hour h with probability lambda(h)/sum(lambda) and a
    negative in hour h' with probability (1-lambda(h'))/sum(1-lambda); ties
    count half.
    """
    lam = np.asarray(lambda_profile, dtype=float)
    if np.all(lam == lam[0]):
        return 0.5
    pos = lam / lam.sum()
    neg = (1 - lam) / (1 - lam).sum()
    above = lam[:, None] > lam[None, :]
    tie = lam[:, None] == lam[None, :]
    joint = pos[:, None] * neg[None, :]
    return float((joint * above).sum() + 0.5 * (joint * tie).sum())


def population_iv(lambda_profile) -> float:
    """Information value of the hour feature in the infinite-data limit."""
    lam = np.asarray(lambda_profile, dtype=float)
    p1 = lam / lam.sum()
    p0 = (1 - lam) / (1 - lam).sum()
    keep = (p1 > 0) & (p0 > 0)
    return float(np.sum((p1[keep] - p0[keep]) * np.log(p1[keep] / p0[keep])))


def synthetic_catalog(scenario: Scenario) -> StationCatalog:
    """Stations 20 km apart on a line, each with its own co-located sensors."""
    stations, sensors = [], []
    for i, sid in enumerate(scenario.station_ids()):
        x, y = 20_000.0 * i, 0.0
        stations.append(Station(sid, f"Synthetic {i + 1}", x, y))
        for sensor_id, kind in _station_sensors(scenario, i):
            sensors.append(Sensor(sensor_id, kind, x, y))
    return StationCatalog(stations, sensors)


def _station_sensors(scenario: Scenario, i: int):
    out = []
    kinds = {SENSOR_KIND_OF[c.kind] for c in scenario.covariates}
    for c in scenario.covariates:
        if c.kind == "diurnal":
            out.append((f"T{i + 1}-{c.name}", "traffic"))
    if "weather" in kinds:
        out.append((f"W{i + 1}", "weather"))
    if "air" in kinds:
        out.append((f"A{i + 1}", "air"))
    return out


def _sensor_for(spec: CovariateSpec, i: int) -> str:
    if spec.kind == "diurnal":
        return f"T{i + 1}-{spec.name}"
    return f"W{i + 1}" if SENSOR_KIND_OF[spec.kind] == "weather" else f"A{i + 1}"


def write_scenario(scenario: Scenario, out_dir) -> dict[str, Path]:
    """Write stations/sensors/readings/events CSVs for the scenario.

    Daily covariates are written once per day at midnight. With a positive
    ``missing_rate`` that share of hourly readings is written blank.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_catalog(synthetic_catalog(scenario), out_dir)
    tables = [generate(scenario, i) for i in range(scenario.n_stations)]
    stamps = [format_hour(t) for t in tables[0].timestamps]
    with (out_dir / "readings.csv").open("w", encoding="utf-8", newline="") as fh:
        fh.write("timestamp,sensor_id,parameter,value\n")
        for i, table in enumerate(tables):
            gaps = _rng(scenario, i, stream=1)
            for spec in scenario.covariates:
                sensor = _sensor_for(spec, i)
                col = table.column(spec.name)
                step = 24 if spec.kind == "daily" else 1
                blank = gaps.random(col.size) < scenario.missing_rate
                lines = []
                for t in range(0, col.size, step):
                    v = "" if blank[t] else repr(float(col[t]))
                    lines.append(f"{stamps[t]},{sensor},{spec.name},{v}\n")
                fh.writelines(lines)
    with (out_dir / "events.csv").open("w", encoding="utf-8", newline="") as fh:
        fh.write("timestamp,station_id,count\n")
        for table in tables:
            for t in np.flatnonzero(table.counts > 0):
                fh.write(f"{stamps[t]},{table.station_id},{int(table.counts[t])}\n")
    return {name: out_dir / f"{name}.csv" for name in ("stations", "sensors", "readings", "events")}
