"""Persist per-stage intermediates under ``<out>/work`` so subcommands can run one at a time."""

from __future__ import annotations

import json
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import FeatureKind, FeatureTable, StationStats, station_sort_key
from .errors import LookupFailure, SchemaError
from .explain import ImportanceReport
from .metrics import GammaPrecision, PrecisionCurve
from .models import load_model, save_model
from .pipeline import ModelMetrics, PreparedStation, ReportBundle, StationResult, StatsResult
from .report import station_dirname
from .stats import CorrelationMatrix, IvResult, TestResult


def work_dir(cfg: RunConfig) -> Path:
    return cfg.out_path / "work"


def _compat_hash(cfg: RunConfig) -> str:
    # a --station restriction must not invalidate intermediates built for all stations
    return replace(cfg, stations=None).hash()


def _dump(path: Path, doc):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _load(path: Path, what: str):
    if not path.is_file():
        raise LookupFailure(f"missing {what} ({path}); run the earlier stage first")
    return json.loads(path.read_text(encoding="utf-8"))


def _arr(a):
    return None if a is None else np.asarray(a, dtype=float).tolist()


def _np(a):
    return None if a is None else np.asarray([np.nan if v is None else v for v in a], dtype=float)


# ---------------------------------------------------------------------------
# ingest


def save_ingest(cfg: RunConfig, all_stats, prepared: dict[str, PreparedStation]) -> None:
    root = work_dir(cfg)
    for sid, prep in prepared.items():
        d = root / station_dirname(sid)
        d.mkdir(parents=True, exist_ok=True)
        t = prep.table
        np.savez(d / "table.npz", timestamps=t.timestamps.astype(np.int64), values=t.values,
                 missing=t.missing, counts=t.counts, labels=t.labels)
        _dump(d / "prepared.json", {
            "station_id": sid, "names": list(t.names), "kinds": {n: str(k) for n, k in t.kinds.items()},
            "eval_year": prep.eval_year, "bounds": {k: list(v) for k, v in prep.bounds.items()},
            "notes": prep.notes,
        })
    _dump(root / "stations.json", {
        "config_hash": _compat_hash(cfg),
        "stats": [asdict(s) for s in all_stats],
        "retained": list(prepared),
    })


def load_ingest(cfg: RunConfig):
    """(all_stats, prepared) as written by ``save_ingest``, restricted to ``cfg.stations`` if set."""
    root = work_dir(cfg)
    doc = _load(root / "stations.json", "ingest output")
    if doc["config_hash"] != _compat_hash(cfg):
        raise SchemaError("intermediates under work/ were built with a different config; rerun ingest")
    all_stats = [StationStats(**s) for s in doc["stats"]]
    ids = doc["retained"]
    if cfg.stations is not None:
        missing = [s for s in cfg.stations if s not in ids]
        if missing:
            raise LookupFailure(f"station {missing[0]!r} was not ingested or was filtered out")
        ids = [s for s in ids if s in cfg.stations]
        all_stats = [s for s in all_stats if s.station_id in cfg.stations]
    prepared = {}
    for sid in ids:
        d = root / station_dirname(sid)
        meta = _load(d / "prepared.json", f"ingest output for {sid}")
        with np.load(d / "table.npz") as z:
            table = FeatureTable(sid, z["timestamps"].astype("datetime64[h]"), tuple(meta["names"]),
                                 z["values"], z["missing"],
                                 {n: FeatureKind.parse(k) for n, k in meta["kinds"].items()},
                                 z["counts"], z["labels"])
        bounds = {k: tuple(v) for k, v in meta["bounds"].items()}
        prepared[sid] = PreparedStation(sid, table, meta["eval_year"], bounds, meta["notes"])
    return all_stats, prepared


# ---------------------------------------------------------------------------
# stats, models, importance, metrics


def save_stats(cfg, sid, s: StatsResult):
    _dump(work_dir(cfg) / station_dirname(sid) / "stats.json", {
        "corr": {"names": list(s.corr.names), "values": _arr(s.corr.values), "constant": list(s.corr.constant)},
        "tests": [asdict(t) for t in s.tests],
        "ivs": [asdict(r) for r in s.ivs],
    })


def load_stats(cfg, sid) -> StatsResult:
    doc = _load(work_dir(cfg) / station_dirname(sid) / "stats.json", f"stats for {sid}")
    c = doc["corr"]
    corr = CorrelationMatrix(tuple(c["names"]), np.asarray(c["values"], dtype=float), tuple(c["constant"]))
    tests = [TestResult(**t) for t in doc["tests"]]
    ivs = [IvResult(r["feature_name"], r["iv"], r["band"], tuple(r["bins"]), tuple(r["woe"])) for r in doc["ivs"]]
    return StatsResult(corr, tests, ivs)


def save_models(cfg, sid, models, degenerate=None):
    d = work_dir(cfg) / station_dirname(sid) / "models"
    d.mkdir(parents=True, exist_ok=True)
    for kind, model in models.items():
        save_model(model, d / f"{kind}.json")
    _dump(d / "index.json", {"models": sorted(models), "degenerate": degenerate})


def load_models(cfg, sid):
    d = work_dir(cfg) / station_dirname(sid) / "models"
    idx = _load(d / "index.json", f"trained models for {sid}")
    return {k: load_model(d / f"{k}.json") for k in idx["models"]}, idx["degenerate"]


def save_importance(cfg, sid, reports: dict[str, ImportanceReport]):
    _dump(work_dir(cfg) / station_dirname(sid) / "importance.json", {
        kind: {"features": list(r.features), "mean_abs_shap": _arr(r.mean_abs_shap),
               "mean_signed_shap": _arr(r.mean_signed_shap), "shap_std": _arr(r.shap_std),
               "perm_mean": _arr(r.perm_mean), "perm_std": _arr(r.perm_std),
               "perm_degenerate": r.perm_degenerate}
        for kind, r in reports.items()
    })


def load_importance(cfg, sid) -> dict[str, ImportanceReport]:
    doc = _load(work_dir(cfg) / station_dirname(sid) / "importance.json", f"importance for {sid}")
    return {kind: ImportanceReport(tuple(r["features"]), _np(r["mean_abs_shap"]), _np(r["mean_signed_shap"]),
                                   _np(r["shap_std"]), _np(r["perm_mean"]), _np(r["perm_std"]),
                                   r["perm_degenerate"])
            for kind, r in doc.items()}


def save_metrics(cfg, sid, metrics: dict[str, ModelMetrics]):
    doc = {}
    for kind, m in metrics.items():
        c = m.curve
        doc[kind] = {
            "n_eval": m.n_eval, "auc": m.auc, "fpr": _arr(m.fpr), "tpr": _arr(m.tpr), "degenerate": m.degenerate,
            "curve": None if c is None else {
                "thresholds": _arr(c.thresholds), "precision": _arr(c.precision),
                "frac_predicted_zero": _arr(c.frac_predicted_zero),
                "n_predicted_zero": c.n_predicted_zero.tolist(), "n": c.n},
            "gammas": [asdict(g) for g in m.gammas],
        }
    _dump(work_dir(cfg) / station_dirname(sid) / "eval.json", doc)


def load_metrics(cfg, sid) -> dict[str, ModelMetrics]:
    doc = _load(work_dir(cfg) / station_dirname(sid) / "eval.json", f"evaluation for {sid}")
    out = {}
    for kind, m in doc.items():
        c = m["curve"]
        curve = None if c is None else PrecisionCurve(
            _np(c["thresholds"]), _np(c["precision"]), _np(c["frac_predicted_zero"]),
            np.asarray(c["n_predicted_zero"], dtype=np.int64), c["n"])
        out[kind] = ModelMetrics(kind, m["n_eval"], m["auc"], _np(m["fpr"]), _np(m["tpr"]), curve,
                                 [GammaPrecision(**g) for g in m["gammas"]], m["degenerate"])
    return out


def load_bundle(cfg: RunConfig) -> ReportBundle:
    """Reassemble a report bundle from persisted intermediates."""
    from .pipeline import bundle_notes

    all_stats, prepared = load_ingest(cfg)
    by_id = {s.station_id: s for s in all_stats}
    bundle = ReportBundle(cfg, all_stats, notes=bundle_notes(cfg, all_stats, prepared))
    for sid in sorted(prepared, key=station_sort_key):
        res = StationResult(sid, by_id[sid], prepared[sid])
        res.analysis = load_stats(cfg, sid)
        _, res.degenerate = load_models(cfg, sid)
        res.importance = load_importance(cfg, sid)
        res.metrics = load_metrics(cfg, sid)
        bad = [m.degenerate for m in res.metrics.values() if m.degenerate]
        res.degenerate = res.degenerate or (bad[0] if bad else None)
        bundle.stations[sid] = res
        if res.degenerate:
            bundle.notes.append(f"station {sid} degenerate: {res.degenerate}")
    return bundle
