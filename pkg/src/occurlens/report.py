"""Write a report bundle to disk: CSV tables, metrics.json and a manifest per run.

Output is built in a sibling staging directory and renamed into place, so a
failed run never leaves a half-written report behind.
"""

from __future__ import annotations

import csv
import json
import math
import re
import shutil
from pathlib import Path

import numpy as np

from .data import station_sort_key
from .pipeline import ReportBundle, StationResult

STATION_FILES = ("corr.csv", "tests.csv", "iv.csv", "woe.csv", "metrics.json", "roc.csv",
                 "precision_curve.csv", "shap.csv", "perm.csv")


def fmt(x) -> str:
    """Six significant digits; blank for absent values."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "nan" if math.isnan(x) else f"{float(x):.6g}"
    return str(x)


def _json_float(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def station_dirname(station_id: str) -> str:
    return re.sub(r"[^\w.-]", "_", station_id)


def _write_csv(path: Path, header, rows):
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _write_json(path: Path, doc):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def _rank(values) -> np.ndarray:
    order = np.argsort(-np.asarray(values, dtype=float), kind="stable")
    rank = np.empty(order.size, dtype=np.int64)
    rank[order] = np.arange(1, order.size + 1)
    return rank


def metrics_doc(res: StationResult) -> dict:
    models = {}
    for kind, m in sorted(res.metrics.items()):
        models[kind] = {
            "n_eval": m.n_eval,
            "degenerate": m.degenerate,
            "auc": _json_float(m.auc),
            "gamma_precision": [
                {"gamma": g.gamma, "feasible": g.feasible, "p_star": _json_float(g.value),
                 "achieving_c": _json_float(g.threshold)}
                for g in m.gammas
            ],
        }
    doc = {
        "station_id": res.station_id,
        "degenerate": res.degenerate,
        "total_events": res.stats.total_events,
        "pct_multi_hours": _json_float(res.stats.pct_multi_hours),
        "models": models,
    }
    if res.prepared is not None:
        train, ev = res.prepared.split()
        doc["eval_year"] = res.prepared.eval_year
        doc["n_train_rows"] = int(train.complete_rows().sum())
        doc["n_eval_rows"] = int(ev.complete_rows().sum())
    return doc


def write_station(res: StationResult, d: Path) -> None:
    d.mkdir()
    a = res.analysis
    if a is not None:
        _write_csv(d / "corr.csv", ("feature", *a.corr.names),
                   ([name, *row] for name, row in zip(a.corr.names, a.corr.values)))
        _write_csv(d / "tests.csv", ("feature", "method", "statistic", "dof", "p_value"),
                   ((t.feature_name, t.method, t.statistic, t.dof, t.p_value) for t in a.tests))
        _write_csv(d / "iv.csv", ("feature", "iv", "band"), ((r.feature_name, r.iv, r.band) for r in a.ivs))
        _write_csv(d / "woe.csv", ("feature", "bin", "woe"),
                   ((r.feature_name, b, w) for r in a.ivs for b, w in zip(r.bins, r.woe)))
    _write_json(d / "metrics.json", metrics_doc(res))

    roc, prec = [], []
    for kind, m in sorted(res.metrics.items()):
        if m.fpr is not None:
            roc.extend((kind, f, t) for f, t in zip(m.fpr, m.tpr))
        if m.curve is not None:
            c = m.curve
            prec.extend((kind, *row) for row in zip(c.thresholds, c.precision, c.frac_predicted_zero,
                                                    c.n_predicted_zero))
    _write_csv(d / "roc.csv", ("model", "fpr", "tpr"), roc)
    _write_csv(d / "precision_curve.csv", ("model", "c", "precision", "frac_predicted_zero", "n_predicted_zero"),
               prec)

    shap, perm = [], []
    for kind, rep in sorted(res.importance.items()):
        if rep.mean_abs_shap is not None:
            rank = _rank(rep.mean_abs_shap)
            shap.extend((kind, f, v, s, sd, r) for f, v, s, sd, r in
                        zip(rep.features, rep.mean_abs_shap, rep.mean_signed_shap, rep.shap_std, rank))
        if rep.perm_degenerate or rep.perm_mean is None:
            perm.extend((kind, f, None, None, None, True) for f in rep.features)
        else:
            rank = _rank(rep.perm_mean)
            perm.extend((kind, f, v, sd, r, False) for f, v, sd, r in
                        zip(rep.features, rep.perm_mean, rep.perm_std, rank))
    _write_csv(d / "shap.csv", ("model", "feature", "value", "signed_value", "std", "rank"), shap)
    _write_csv(d / "perm.csv", ("model", "feature", "value", "std", "rank", "degenerate"), perm)


def _write_bundle(bundle: ReportBundle, root: Path, figures: bool) -> None:
    _write_json(root / "manifest.json", bundle.manifest())
    if not bundle.stations and not bundle.station_stats:
        return
    retained = set(bundle.stations)
    _write_csv(root / "station_stats.csv",
               ("station_id", "total_events", "pct_zero_hours", "pct_one_hours", "pct_multi_hours", "n_hours",
                "retained"),
               ((s.station_id, s.total_events, s.pct_zero_hours, s.pct_one_hours, s.pct_multi_hours, s.n_hours,
                 s.station_id in retained) for s in bundle.station_stats))
    for sid in sorted(bundle.stations, key=station_sort_key):
        d = root / station_dirname(sid)
        write_station(bundle.stations[sid], d)
        if figures:
            from .plotting import station_figures

            station_figures(bundle.stations[sid], d / "figures")


def emit_report(bundle: ReportBundle, out_dir, figures: bool | None = None) -> Path:
    """Write ``bundle`` into ``out_dir`` (replacing it) and return the path."""
    out_dir = Path(out_dir)
    if figures is None:
        figures = bool(bundle.config and bundle.config.figures)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    staging = out_dir.parent / f".{out_dir.name}.staging"
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir()
    try:
        _write_bundle(bundle, staging, figures)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    old = out_dir.parent / f".{out_dir.name}.old"
    if out_dir.exists():
        if old.exists():
            shutil.rmtree(old)
        out_dir.rename(old)
    staging.rename(out_dir)
    if old.exists():
        shutil.rmtree(old)
    return out_dir


def read_csv(path) -> list[dict[str, str]]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
