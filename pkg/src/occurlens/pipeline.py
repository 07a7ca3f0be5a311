"""End-to-end orchestration: ingest, impute, normalize, filter, stats, train, explain, eval.

Every station is an independent unit of work. Stage failures are wrapped in
``StageError`` carrying the stage name and station id; stations whose labels
are single-class are reported as degenerate instead of aborting the run.
"""

from __future__ import annotations

import json
import logging
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .data import (
    TIME_KINDS,
    FeatureTable,
    StationStats,
    Series,
    add_time_features,
    binarize_labels,
    filter_stations,
    hourly_grid,
    load_events,
    load_readings,
    normalize_minmax,
    split_by_year,
    station_sort_key,
    station_stats,
    to_grid,
)
from .errors import DegenerateInputError, LookupFailure, OccurlensError, SchemaError, StageError
from .explain import ImportanceReport, ShapConfig, mean_shap, permutation_importance
from .metrics import GammaPrecision, PrecisionCurve, gamma_precision, precision_curve, roc_auc, roc_curve
from .models import TrainedModel, fit_gbdt, fit_mlp, train_prior, tune_random_search
from .models.base import training_arrays
from .spatial import (
    Station,
    StationCatalog,
    fill_daily,
    idw_weights,
    impute_traffic,
    impute_weighted,
    load_catalog,
    nearest_sensor,
    station_sensors,
)
from .stats import CorrelationMatrix, IvResult, TestResult, feature_tests, pearson_corr_matrix
from .synth import write_scenario

log = logging.getLogger(__name__)

EXPLAINED_KINDS = ("gbdt", "mlp")


def derive_seed(base: int, *tags: str) -> int:
    """Stable 32-bit seed for (base seed, station id, purpose)."""
    keys = [int(base) & 0xFFFFFFFF] + [zlib.crc32(t.encode("utf-8")) for t in tags]
    return int(np.random.SeedSequence(keys).generate_state(1)[0])


def max_workers(n_tasks: int) -> int:
    cap = os.environ.get("OCCURLENS_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = max(1, int(cap))
        except ValueError:
            log.warning("ignoring non-integer OCCURLENS_THREADS=%r", cap)
    return max(1, min(n, n_tasks))


def _wrap(stage: str, station_id: str | None, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except OccurlensError as exc:
        raise StageError(stage, station_id, exc) from exc


# ---------------------------------------------------------------------------
# Result containers


@dataclass
class PreparedStation:
    """Imputed, time-encoded, normalized table (training bounds) for one station."""

    station_id: str
    table: FeatureTable
    eval_year: int
    bounds: dict
    notes: dict = field(default_factory=dict)

    def split(self):
        return split_by_year(self.table, self.eval_year)


@dataclass
class StatsResult:
    corr: CorrelationMatrix
    tests: list[TestResult]
    ivs: list[IvResult]


@dataclass
class ModelMetrics:
    kind: str
    n_eval: int
    auc: float | None = None
    fpr: np.ndarray | None = None
    tpr: np.ndarray | None = None
    curve: PrecisionCurve | None = None
    gammas: list[GammaPrecision] = field(default_factory=list)
    degenerate: str | None = None


@dataclass
class StationResult:
    station_id: str
    stats: StationStats
    prepared: PreparedStation | None = None
    analysis: StatsResult | None = None
    models: dict[str, TrainedModel] = field(default_factory=dict)
    importance: dict[str, ImportanceReport] = field(default_factory=dict)
    metrics: dict[str, ModelMetrics] = field(default_factory=dict)
    degenerate: str | None = None
    notes: list[str] = field(default_factory=list)


@dataclass
class ReportBundle:
    config: RunConfig | None
    station_stats: list[StationStats] = field(default_factory=list)
    stations: dict[str, StationResult] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def manifest(self) -> dict:
        cfg = self.config
        models = list(cfg.models) if cfg else []
        return {
            "tool": "occurlens",
            "version": __version__,
            "numpy": np.__version__,
            "config_hash": cfg.hash() if cfg else None,
            "config": _config_doc(cfg),
            "models": models,
            "explained_models": [m for m in models if m in EXPLAINED_KINDS],
            "stations": sorted(self.stations, key=station_sort_key),
            "degenerate": {sid: r.degenerate for sid, r in sorted(self.stations.items()) if r.degenerate},
            "notes": list(self.notes),
        }


def _config_doc(cfg):
    if cfg is None:
        return None
    d = cfg.to_dict()
    d.pop("out_dir")
    return d


# ---------------------------------------------------------------------------
# Ingest


@dataclass
class Inputs:
    catalog: StationCatalog
    grid: np.ndarray
    series: dict[tuple[str, str], tuple[np.ndarray, np.ndarray]]
    counts: dict[str, np.ndarray]


def data_paths(cfg: RunConfig) -> dict[str, Path]:
    """Input CSV paths; for a scenario config these live under ``<out>/data``."""
    if cfg.inputs is not None:
        return {k: Path(v) for k, v in cfg.inputs.items()}
    base = cfg.out_path / "data"
    return {name: base / f"{name}.csv" for name in ("stations", "sensors", "readings", "events")}


def ensure_synth_data(cfg: RunConfig) -> dict[str, Path]:
    """Write the scenario CSVs unless an identical scenario is already on disk."""
    paths = data_paths(cfg)
    if cfg.scenario is None:
        return paths
    stamp = cfg.out_path / "data" / "scenario.json"
    doc = json.dumps(cfg.scenario.to_dict(), sort_keys=True)
    if stamp.is_file() and stamp.read_text(encoding="utf-8") == doc and all(p.is_file() for p in paths.values()):
        return paths
    write_scenario(cfg.scenario, stamp.parent)
    stamp.write_text(doc, encoding="utf-8")
    return paths


def load_inputs(cfg: RunConfig) -> Inputs:
    paths = ensure_synth_data(cfg)
    catalog = load_catalog(paths["stations"], paths["sensors"], paths.get("travel_times"))
    readings = load_readings(paths["readings"])
    events = load_events(paths["events"])
    known = {s.id for s in catalog.stations}
    unknown = sorted(set(events) - known, key=station_sort_key)
    if unknown:
        raise LookupFailure(f"events reference unknown stations: {', '.join(unknown[:5])}")
    sensor_ids = {s.id for s in catalog.sensors}
    stray = sorted({k[0] for k in readings} - sensor_ids)
    if stray:
        log.warning("ignoring readings from sensors missing in the catalog: %s", ", ".join(stray[:5]))
    stamps = [s.timestamps for s in list(readings.values()) + list(events.values()) if s.timestamps.size]
    if not stamps:
        raise SchemaError("no readings or events")
    grid = hourly_grid(min(s[0] for s in stamps), max(s[-1] for s in stamps))
    series = {k: to_grid(v, grid) for k, v in readings.items() if k[0] in sensor_ids}
    counts = {}
    for sid in known:
        c = np.zeros(grid.shape[0], dtype=np.int64)
        ev = events.get(sid)
        if ev is not None and ev.timestamps.size:
            vals, _ = to_grid(Series(ev.timestamps, ev.values, ev.missing), grid)
            c = np.nan_to_num(vals, nan=0.0).astype(np.int64)
        counts[sid] = c
    return Inputs(catalog, grid, series, counts)


def _available(inputs: Inputs) -> dict[str, set[str]]:
    out: dict[str, set[str]] = {}
    for sensor, param in inputs.series:
        out.setdefault(sensor, set()).add(param)
    return out


def _column_names(inputs: Inputs):
    """(kind, parameter, column name) for every parameter any sensor reports."""
    avail = _available(inputs)
    found = []
    for kind in ("weather", "traffic", "air"):
        for param in sorted(station_sensors(inputs.catalog, avail, kind)):
            found.append((kind, param))
    params = [p for _, p in found]
    names = []
    for kind, param in found:
        name = param if params.count(param) == 1 and param not in TIME_KINDS else f"{kind}:{param}"
        names.append((kind, param, name))
    return names


def _weather(station: Station, sensors, inputs: Inputs, param, cfg: RunConfig):
    vals = np.vstack([inputs.series[(s.id, param)][0] for s in sensors])
    miss = np.vstack([inputs.series[(s.id, param)][1] for s in sensors])
    w = idw_weights(station, sensors, cfg.idw_exponent, cfg.idw_inverse)
    out, out_miss = impute_weighted(vals, miss, w)
    # a co-located sensor takes all the weight; where it is silent, fall back to the others
    far = np.array([(s.x, s.y) != (station.x, station.y) for s in sensors])
    if out_miss.any() and far.any() and not far.all():
        others = [s for s, f in zip(sensors, far) if f]
        w2 = idw_weights(station, others, cfg.idw_exponent, cfg.idw_inverse)
        alt, alt_miss = impute_weighted(vals[far], miss[far], w2)
        take = out_miss & ~alt_miss
        out[take] = alt[take]
        out_miss = out_miss & alt_miss
    return out, out_miss, {"method": "idw", "sensors": [s.id for s in sensors]}


def _traffic(station: Station, sensors, inputs: Inputs, param, cfg: RunConfig):
    target = nearest_sensor(station, sensors)
    vals, miss = inputs.series[(target.id, param)]
    pool = [k for k in sorted(inputs.series)
            if k != (target.id, param) and inputs.catalog.sensor(k[0]).kind == "traffic"]
    cands = [inputs.series[k] for k in pool]
    fill = impute_traffic(vals, miss, cands, inputs.grid, cfg.traffic_corr_threshold)
    source = fill.source
    if source.startswith("rescaled:"):
        source = "rescaled:" + "/".join(pool[int(source.split(":")[1])])
    return fill.values, np.zeros(vals.shape, dtype=bool), {"method": source, "sensor": target.id,
                                                          "gaps": int(miss.sum())}


def _air(station: Station, sensors, inputs: Inputs, param, cfg: RunConfig):
    target = nearest_sensor(station, sensors)
    vals, miss = inputs.series[(target.id, param)]
    day0 = inputs.grid[0].astype("datetime64[D]")
    offset = int((inputs.grid[0] - day0.astype("datetime64[h]")).astype(np.int64))
    day = (np.arange(vals.size) + offset) // 24
    n_days = int(day[-1]) + 1
    daily = np.full(n_days, np.nan)
    seen = np.zeros(n_days, dtype=bool)
    # first observed reading of each day is that day's value
    for t in np.flatnonzero(~miss):
        if not seen[day[t]]:
            daily[day[t]] = vals[t]
            seen[day[t]] = True
    hourly = fill_daily(daily, ~seen)[offset: offset + vals.size]
    return hourly, np.zeros(vals.shape, dtype=bool), {"method": "daily", "sensor": target.id,
                                                      "days_filled": int(n_days - seen.sum())}


_IMPUTERS = {"weather": _weather, "traffic": _traffic, "air": _air}


def build_station_table(inputs: Inputs, station_id: str, cfg: RunConfig) -> tuple[FeatureTable, dict]:
    """Raw imputed feature table with time columns and labels attached."""
    station = inputs.catalog.station(station_id)
    avail = _available(inputs)
    groups = {k: station_sensors(inputs.catalog, avail, k) for k in _IMPUTERS}
    cols, masks, notes = {}, {}, {}
    for kind, param, name in _column_names(inputs):
        sensors = groups[kind][param]
        vals, miss, info = _IMPUTERS[kind](station, sensors, inputs, param, cfg)
        info["still_missing"] = int(miss.sum())
        cols[name], masks[name], notes[name] = vals, miss, info
    counts = inputs.counts[station_id]
    base = FeatureTable(station_id, inputs.grid, (), np.empty((inputs.grid.size, 0)),
                        np.empty((inputs.grid.size, 0), dtype=bool), counts=counts,
                        labels=binarize_labels(counts))
    table = add_time_features(base)
    if cols:
        table = table.with_columns(cols, missing=masks)
    return table, notes


def prepare_station(inputs: Inputs, station_id: str, cfg: RunConfig) -> PreparedStation:
    raw, notes = build_station_table(inputs, station_id, cfg)
    train, _ = split_by_year(raw, cfg.eval_year)
    _, bounds = normalize_minmax(train)
    table, _ = normalize_minmax(raw, bounds)
    years = raw.timestamps.astype("datetime64[Y]").astype(np.int64) + 1970
    eval_year = cfg.eval_year if cfg.eval_year is not None else int(years[-1])
    incomplete = int((~table.complete_rows()).sum())
    if incomplete:
        notes["_incomplete_rows"] = incomplete
    return PreparedStation(station_id, table, eval_year, bounds, notes)


def ingest(cfg: RunConfig, inputs: Inputs | None = None):
    """Load inputs, compute per-station counts statistics, filter, and prepare retained stations.

    Returns ``(all_stats, prepared)`` where ``prepared`` maps retained station ids
    to their normalized tables.
    """
    inputs = inputs or _wrap("ingest", None, load_inputs, cfg)
    ids = sorted(inputs.counts, key=station_sort_key)
    if cfg.stations is not None:
        unknown = [s for s in cfg.stations if s not in inputs.counts]
        if unknown:
            raise StageError("ingest", unknown[0], LookupFailure(f"unknown station {unknown[0]!r}"))
        ids = [s for s in ids if s in set(cfg.stations)]
    all_stats = [station_stats(sid, inputs.counts[sid]) for sid in ids]
    kept = filter_stations(all_stats, cfg.station_filter_threshold)
    with ThreadPoolExecutor(max_workers(len(kept))) as pool:
        done = pool.map(lambda sid: _wrap("ingest", sid, prepare_station, inputs, sid, cfg), kept)
        prepared = dict(zip(kept, done))
    return all_stats, prepared


# ---------------------------------------------------------------------------
# Per-station analysis stages


def run_stats(prep: PreparedStation, cfg: RunConfig) -> StatsResult:
    table = prep.table
    corr = pearson_corr_matrix(table)
    tests, ivs = feature_tests(table, cfg.t_test, cfg.woe_bins)
    return StatsResult(corr, tests, ivs)


def _single_class(labels) -> bool:
    return labels.size == 0 or labels.min() == labels.max()


def run_train(prep: PreparedStation, cfg: RunConfig) -> dict[str, TrainedModel]:
    train, _ = prep.split()
    if _single_class(train.labels[train.complete_rows()]):
        raise DegenerateInputError("training labels contain a single class")
    models = {}
    sid = prep.station_id
    for kind in cfg.models:
        seed = derive_seed(cfg.seed, sid, kind)
        if kind == "prior":
            model = train_prior(train)
        else:
            defaults = cfg.gbdt if kind == "gbdt" else cfg.mlp
            hp = tune_random_search(train, kind, k_folds=cfg.k_folds, budget=cfg.search_budget,
                                    seed=seed, defaults=defaults)
            X, y, names = training_arrays(train)
            fit = fit_gbdt if kind == "gbdt" else fit_mlp
            model = fit(X, y, hp, names, seed)
            model.metadata["training_span"] = [str(train.timestamps[0]), str(train.timestamps[-1])]
        model.metadata["station_id"] = sid
        models[kind] = model
    return models


def _eval_arrays(prep: PreparedStation, names):
    _, ev = prep.split()
    sub = ev.select(names)
    keep = sub.complete_rows()
    return sub.values[keep], ev.labels[keep].astype(np.int64)


def run_explain(prep: PreparedStation, models: dict[str, TrainedModel], cfg: RunConfig) -> dict[str, ImportanceReport]:
    """Mean SHAP over a seeded subset of eval rows, and permutation importance on all eval rows."""
    out = {}
    train, _ = prep.split()
    for kind in EXPLAINED_KINDS:
        model = models.get(kind)
        if model is None:
            continue
        names = model.feature_names
        Xtr, _, _ = training_arrays(train, names)
        X, y = _eval_arrays(prep, names)
        seed = derive_seed(cfg.seed, prep.station_id, kind, "explain")
        report = ImportanceReport(tuple(names))
        if X.shape[0]:
            rows = np.arange(X.shape[0])
            if rows.size > cfg.shap.max_rows:
                rows = np.sort(np.random.default_rng(seed).choice(rows.size, cfg.shap.max_rows, replace=False))
            shap_cfg = ShapConfig(Xtr.mean(axis=0), cfg.shap.mode, cfg.shap.samples, seed)
            summary = mean_shap(model, X[rows], shap_cfg)
            report.mean_abs_shap = summary.mean_abs
            report.mean_signed_shap = summary.mean_signed
            report.shap_std = summary.std_abs
        if X.shape[0] and not _single_class(y):
            perm = permutation_importance(model, X, y, cfg.permutation.loss, cfg.permutation.repeats,
                                          seed, cfg.permutation.noise)
            report.perm_mean, report.perm_std = perm.mean, perm.std
            report.perm_degenerate = perm.degenerate
        else:
            report.perm_degenerate = True
        out[kind] = report
    return out


def run_eval(prep: PreparedStation, models: dict[str, TrainedModel], cfg: RunConfig) -> dict[str, ModelMetrics]:
    out = {}
    for kind, model in models.items():
        X, y = _eval_arrays(prep, model.feature_names)
        m = ModelMetrics(kind, int(y.size))
        if _single_class(y):
            m.degenerate = "evaluation labels contain a single class"
        else:
            p = model.predict_matrix(X)
            m.auc = roc_auc(p, y)
            m.fpr, m.tpr = roc_curve(p, y)
            m.curve = precision_curve(np.clip(1.0 - p, 0.0, 1.0), y)
            m.gammas = [gamma_precision(m.curve, g) for g in cfg.gammas]
        out[kind] = m
    return out


def analyze_station(prep: PreparedStation, stats: StationStats, cfg: RunConfig) -> StationResult:
    sid = prep.station_id
    res = StationResult(sid, stats, prep)
    res.analysis = _wrap("stats", sid, run_stats, prep, cfg)
    try:
        res.models = _wrap("train", sid, run_train, prep, cfg)
    except StageError as exc:
        if not isinstance(exc.cause, DegenerateInputError):
            raise
        res.degenerate = str(exc.cause)
        return res
    res.importance = _wrap("explain", sid, run_explain, prep, res.models, cfg)
    res.metrics = _wrap("eval", sid, run_eval, prep, res.models, cfg)
    bad = [m.degenerate for m in res.metrics.values() if m.degenerate]
    if bad:
        res.degenerate = bad[0]
    return res


def run_pipeline(cfg: RunConfig) -> ReportBundle:
    """Run every stage for every retained station and collect the report bundle."""
    all_stats, prepared = ingest(cfg)
    by_id = {s.station_id: s for s in all_stats}
    bundle = ReportBundle(cfg, all_stats, notes=bundle_notes(cfg, all_stats, prepared))
    ids = list(prepared)
    with ThreadPoolExecutor(max_workers(len(ids))) as pool:
        results = pool.map(lambda sid: analyze_station(prepared[sid], by_id[sid], cfg), ids)
        for res in results:
            bundle.stations[res.station_id] = res
    for sid, res in bundle.stations.items():
        if res.degenerate:
            bundle.notes.append(f"station {sid} degenerate: {res.degenerate}")
    return bundle


def bundle_notes(cfg: RunConfig, all_stats, prepared) -> list[str]:
    notes = []
    dropped = [s.station_id for s in all_stats if s.station_id not in prepared]
    if dropped:
        notes.append(f"filtered out (multi-event share >= {cfg.station_filter_threshold}): {', '.join(dropped)}")
    skipped = [m for m in EXPLAINED_KINDS if m not in cfg.models]
    if skipped:
        notes.append(f"models restricted to {', '.join(cfg.models)}; no importance reports for {', '.join(skipped)}")
    for sid, prep in prepared.items():
        n = prep.notes.get("_incomplete_rows")
        if n:
            notes.append(f"station {sid}: {n} rows with unfilled cells excluded from modelling")
    return notes

