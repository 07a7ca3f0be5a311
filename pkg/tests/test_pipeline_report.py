import json
import shutil

import numpy as np
import pytest

from occurlens import report as report_mod
from occurlens.cli import main
from occurlens.config import config_from_dict
from occurlens.errors import LookupFailure, StageError
from occurlens.pipeline import ReportBundle, derive_seed, max_workers, run_pipeline
from occurlens.report import emit_report, fmt, read_csv

FAST = {
    "gbdt": {"n_trees": 20, "max_depth": 3},
    "mlp": {"hidden": [8], "epochs": 3, "patience": 2},
    "shap": {"max_rows": 48},
    "permutation": {"repeats": 2},
}
TWO_YEARS = 24 * 365 * 2


def small_config(tmp_path, **extra):
    doc = {"seed": 5, "scenario": {"n_hours": TWO_YEARS, "n_stations": 2}, **FAST, "figures": False,
           "out_dir": str(tmp_path / "out"), **extra}
    return config_from_dict(doc, tmp_path)


def write_config(tmp_path, **extra):
    doc = {"seed": 5, "scenario": {"n_hours": TWO_YEARS, "n_stations": 2}, **FAST, "figures": False,
           "out_dir": "out", **extra}
    p = tmp_path / "run.json"
    p.write_text(json.dumps(doc))
    return p


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("run")
    cfg = small_config(tmp, figures=True)
    bundle = run_pipeline(cfg)
    out = emit_report(bundle, tmp / "report")
    return cfg, bundle, out


class TestHelpers:
    def test_derive_seed(self):
        assert derive_seed(1, "S1", "gbdt") == derive_seed(1, "S1", "gbdt")
        assert derive_seed(1, "S1", "gbdt") != derive_seed(1, "S2", "gbdt")
        assert derive_seed(1, "S1", "gbdt") != derive_seed(2, "S1", "gbdt")

    def test_max_workers(self, monkeypatch):
        monkeypatch.setenv("OCCURLENS_THREADS", "1")
        assert max_workers(8) == 1
        monkeypatch.setenv("OCCURLENS_THREADS", "3")
        assert max_workers(2) == 2
        assert max_workers(0) == 1

    def test_fmt(self):
        assert fmt(0.1234567891) == "0.123457"
        assert fmt(None) == ""
        assert fmt(True) == "true"
        assert fmt(np.int64(7)) == "7"
        assert fmt(float("nan")) == "nan"


class TestPipeline:
    def test_structure(self, run):
        _, bundle, _ = run
        assert sorted(bundle.stations) == ["S1", "S2"]
        for res in bundle.stations.values():
            assert sorted(res.metrics) == ["gbdt", "mlp", "prior"]
            assert sorted(res.importance) == ["gbdt", "mlp"]
            for m in res.metrics.values():
                assert 0.0 <= m.auc <= 1.0

    def test_feature_once_per_report(self, run):
        _, bundle, out = run
        for sid, res in bundle.stations.items():
            names = list(res.prepared.table.names)
            d = out / sid
            for fname in ("tests.csv", "iv.csv"):
                assert sorted(r["feature"] for r in read_csv(d / fname)) == sorted(names), fname
            # the correlation matrix also carries the label row
            assert sorted(r["feature"] for r in read_csv(d / "corr.csv")) == sorted(names + ["label"])
            for fname in ("shap.csv", "perm.csv"):
                rows = read_csv(d / fname)
                for kind in ("gbdt", "mlp"):
                    assert sorted(r["feature"] for r in rows if r["model"] == kind) == sorted(names)

    def test_layout(self, run):
        _, bundle, out = run
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["stations"] == ["S1", "S2"]
        assert manifest["config_hash"] == bundle.config.hash()
        subdirs = sorted(p.name for p in out.iterdir() if p.is_dir())
        assert subdirs == ["S1", "S2"]
        for sid in subdirs:
            for fname in report_mod.STATION_FILES:
                assert (out / sid / fname).is_file()
            assert (out / sid / "figures" / "roc.png").is_file()
            assert (out / sid / "figures" / "shap_gbdt.png").is_file()
        assert not (out.parent / ".report.staging").exists()

    def test_csv_round_trip(self, run):
        _, bundle, out = run
        res = bundle.stations["S1"]
        rows = {r["feature"]: r for r in read_csv(out / "S1" / "iv.csv")}
        for iv in res.analysis.ivs:
            assert float(rows[iv.feature_name]["iv"]) == pytest.approx(iv.iv, rel=5e-6, abs=1e-300)
            assert rows[iv.feature_name]["band"] == iv.band
        rows = [r for r in read_csv(out / "S1" / "roc.csv") if r["model"] == "gbdt"]
        m = res.metrics["gbdt"]
        np.testing.assert_allclose([float(r["fpr"]) for r in rows], m.fpr, rtol=5e-6, atol=1e-12)
        metrics = json.loads((out / "S1" / "metrics.json").read_text())
        assert metrics["models"]["gbdt"]["auc"] == m.auc
        shap = {r["feature"]: r for r in read_csv(out / "S1" / "shap.csv") if r["model"] == "gbdt"}
        rep = res.importance["gbdt"]
        for f, v in zip(rep.features, rep.mean_abs_shap):
            assert float(shap[f]["value"]) == pytest.approx(v, rel=5e-6, abs=1e-300)

    def test_determinism(self, run, tmp_path):
        cfg, _, out = run
        again = emit_report(run_pipeline(cfg), tmp_path / "again", figures=False)
        for sid in ("S1", "S2"):
            assert (again / sid / "metrics.json").read_bytes() == (out / sid / "metrics.json").read_bytes()
            assert (again / sid / "shap.csv").read_bytes() == (out / sid / "shap.csv").read_bytes()

    def test_prior_only(self, tmp_path):
        cfg = small_config(tmp_path, models=["prior"])
        bundle = run_pipeline(cfg)
        out = emit_report(bundle, tmp_path / "report")
        assert list(bundle.stations["S1"].metrics) == ["prior"]
        assert bundle.stations["S1"].importance == {}
        assert len(read_csv(out / "S1" / "shap.csv")) == 0
        assert len(read_csv(out / "S1" / "perm.csv")) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["explained_models"] == []
        assert any("restricted" in n for n in manifest["notes"])

    def test_unknown_station(self, tmp_path):
        cfg = small_config(tmp_path, stations=["S9"])
        with pytest.raises(StageError) as info:
            run_pipeline(cfg)
        assert isinstance(info.value.cause, LookupFailure)

    def test_degenerate_station(self, tmp_path):
        cfg = small_config(tmp_path, models=["prior", "gbdt"])
        data = tmp_path / "data"
        from occurlens.synth import write_scenario

        paths = write_scenario(cfg.scenario, data)
        # drop every S2 event in the final year so its eval labels are single-class
        lines = paths["events"].read_text().splitlines()
        kept = [ln for ln in lines if not (",S2," in ln and ln.startswith("2016"))]
        paths["events"].write_text("\n".join(kept) + "\n")
        doc = {"seed": 5, "inputs": {k: str(v) for k, v in paths.items()}, **FAST, "figures": False,
               "models": ["prior", "gbdt"]}
        bundle = run_pipeline(config_from_dict(doc, tmp_path))
        assert bundle.stations["S1"].degenerate is None
        s2 = bundle.stations["S2"]
        assert s2.degenerate and "single class" in s2.degenerate
        assert all(m.auc is None for m in s2.metrics.values())
        out = emit_report(bundle, tmp_path / "report")
        metrics = json.loads((out / "S2" / "metrics.json").read_text())
        assert metrics["degenerate"]
        assert metrics["models"]["gbdt"]["auc"] is None
        assert all(r["degenerate"] == "true" for r in read_csv(out / "S2" / "perm.csv"))
        assert "S2" in json.loads((out / "manifest.json").read_text())["degenerate"]

    def test_stage_error_names_stage(self, tmp_path, monkeypatch):
        from occurlens import pipeline
        from occurlens.errors import DomainError

        def boom(*a, **k):
            raise DomainError("bad")

        monkeypatch.setattr(pipeline, "run_stats", boom)
        with pytest.raises(StageError) as info:
            run_pipeline(small_config(tmp_path))
        assert info.value.stage == "stats" and info.value.station_id in ("S1", "S2")


class TestEmit:
    def test_empty_bundle(self, tmp_path):
        out = emit_report(ReportBundle(None), tmp_path / "r")
        assert [p.name for p in out.iterdir()] == ["manifest.json"]

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError):
            emit_report(ReportBundle(None), blocker / "r")
        assert blocker.read_text() == "x"

    def test_failure_leaves_old_report(self, run, tmp_path, monkeypatch):
        _, bundle, src = run
        out = tmp_path / "report"
        shutil.copytree(src, out)
        before = (out / "S1" / "metrics.json").read_bytes()

        def boom(res, d):
            d.mkdir()
            (d / "corr.csv").write_text("partial")
            raise OSError("disk full")

        monkeypatch.setattr(report_mod, "write_station", boom)
        with pytest.raises(OSError):
            emit_report(bundle, out, figures=False)
        assert (out / "S1" / "metrics.json").read_bytes() == before
        assert sorted(p.name for p in tmp_path.iterdir()) == ["report"]

    def test_replaces_existing(self, tmp_path):
        out = tmp_path / "r"
        out.mkdir()
        (out / "stale.txt").write_text("old")
        emit_report(ReportBundle(None), out)
        assert not (out / "stale.txt").exists()


class TestCli:
    def test_usage_errors(self, tmp_path, capsys):
        assert main([]) == 1
        assert main(["nope"]) == 1
        assert main(["all"]) == 1
        assert main(["all", "--config", "x.json", "--seed", "abc"]) == 1

    def test_data_errors(self, tmp_path, capsys):
        assert main(["all", "--config", str(tmp_path / "missing.json")]) == 2
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"scenario": {}}))
        assert main(["all", "--config", str(bad)]) == 2
        assert "seed" in capsys.readouterr().err
        cfg = write_config(tmp_path)
        assert main(["stats", "--config", str(cfg)]) == 2  # nothing ingested yet

    def test_internal_error(self, tmp_path, monkeypatch):
        from occurlens import cli

        def boom(cfg):
            raise RuntimeError("bug")

        monkeypatch.setitem(cli.COMMANDS, "synth", boom)
        assert main(["synth", "--config", str(write_config(tmp_path))]) == 3

    def test_staged_matches_all(self, tmp_path, capsys):
        cfg = str(write_config(tmp_path))
        for cmd in ("synth", "ingest", "stats", "train", "explain", "eval", "report"):
            assert main([cmd, "--config", cfg]) == 0, cmd
        staged = tmp_path / "out" / "report"
        metrics = {sid: (staged / sid / "metrics.json").read_bytes() for sid in ("S1", "S2")}
        assert main(["all", "--config", cfg, "--out", str(tmp_path / "all")]) == 0
        for sid, blob in metrics.items():
            assert (tmp_path / "all" / "report" / sid / "metrics.json").read_bytes() == blob
        printed = capsys.readouterr().out
        assert "S1\tgbdt\t" in printed

    def test_station_override(self, tmp_path):
        cfg = str(write_config(tmp_path))
        assert main(["all", "--config", cfg, "--station", "S2"]) == 0
        out = tmp_path / "out" / "report"
        assert sorted(p.name for p in out.iterdir() if p.is_dir()) == ["S2"]
        assert main(["all", "--config", cfg, "--station", "S7"]) == 2
