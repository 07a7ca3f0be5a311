"""Command-line entry point.

    occurlens <subcommand> --config run.json [--seed N] [--station ID] [--out DIR]

Subcommands synth, ingest, stats, train, explain and eval each read the
previous stage's output from ``<out>/work``; ``report`` assembles the report
from there, and ``all`` runs everything in memory and writes the report.

Exit codes: 0 success, 1 usage error, 2 data or validation error, 3 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor

from . import __version__
from .config import load_config
from .errors import DegenerateInputError, OccurlensError, ParameterError, StageError

log = logging.getLogger("occurlens")

SUBCOMMANDS = {
    "synth": "write the configured synthetic scenario as input CSVs",
    "ingest": "load inputs, impute, filter stations and normalize",
    "stats": "correlations, chi-squared / t-tests and information values",
    "train": "fit the configured models per station",
    "explain": "SHAP and permutation importance for the fitted models",
    "eval": "AUC, ROC, class-zero precision curves and gamma-precision",
    "report": "assemble the report directory from stored intermediates",
    "all": "run every stage and write the report",
}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = Parser(prog="occurlens", description="Hourly event-occurrence analysis pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=Parser)
    sub.required = True
    for name, help_text in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", required=True, help="run configuration (JSON)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--station", help="restrict to one station id")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    return parser


def _fan_out(prepared, fn):
    from .pipeline import max_workers

    ids = list(prepared)
    with ThreadPoolExecutor(max_workers(len(ids))) as pool:
        return dict(zip(ids, pool.map(fn, ids)))


def cmd_synth(cfg):
    from .pipeline import ensure_synth_data

    if cfg.scenario is None:
        raise ParameterError("synth needs a config with a 'scenario' section")
    for name, path in sorted(ensure_synth_data(cfg).items()):
        print(f"{name}\t{path}")


def cmd_ingest(cfg):
    from . import store
    from .pipeline import ingest

    all_stats, prepared = ingest(cfg)
    store.save_ingest(cfg, all_stats, prepared)
    for s in all_stats:
        state = "kept" if s.station_id in prepared else "filtered"
        print(f"{s.station_id}\t{s.total_events}\t{s.pct_multi_hours:.6g}\t{state}")


def cmd_stats(cfg):
    from . import store
    from .pipeline import _wrap, run_stats

    _, prepared = store.load_ingest(cfg)

    def one(sid):
        store.save_stats(cfg, sid, _wrap("stats", sid, run_stats, prepared[sid], cfg))

    _fan_out(prepared, one)


def cmd_train(cfg):
    from . import store
    from .pipeline import _wrap, run_train

    _, prepared = store.load_ingest(cfg)

    def one(sid):
        try:
            models, why = _wrap("train", sid, run_train, prepared[sid], cfg), None
        except StageError as exc:
            if not isinstance(exc.cause, DegenerateInputError):
                raise
            models, why = {}, str(exc.cause)
            log.warning("station %s degenerate: %s", sid, why)
        store.save_models(cfg, sid, models, why)

    _fan_out(prepared, one)


def cmd_explain(cfg):
    from . import store
    from .pipeline import _wrap, run_explain

    _, prepared = store.load_ingest(cfg)

    def one(sid):
        models, _ = store.load_models(cfg, sid)
        store.save_importance(cfg, sid, _wrap("explain", sid, run_explain, prepared[sid], models, cfg))

    _fan_out(prepared, one)


def cmd_eval(cfg):
    from . import store
    from .pipeline import _wrap, run_eval

    _, prepared = store.load_ingest(cfg)

    def one(sid):
        models, _ = store.load_models(cfg, sid)
        metrics = _wrap("eval", sid, run_eval, prepared[sid], models, cfg)
        store.save_metrics(cfg, sid, metrics)
        return metrics

    for sid, metrics in _fan_out(prepared, one).items():
        for kind, m in sorted(metrics.items()):
            auc = "degenerate" if m.auc is None else f"{m.auc:.6g}"
            print(f"{sid}\t{kind}\t{auc}")


def cmd_report(cfg):
    from . import store
    from .report import emit_report

    path = emit_report(store.load_bundle(cfg), cfg.out_path / "report")
    print(path)


def cmd_all(cfg):
    from .pipeline import run_pipeline
    from .report import emit_report

    bundle = run_pipeline(cfg)
    path = emit_report(bundle, cfg.out_path / "report")
    for sid, res in bundle.stations.items():
        for kind, m in sorted(res.metrics.items()):
            auc = "degenerate" if m.auc is None else f"{m.auc:.6g}"
            print(f"{sid}\t{kind}\t{auc}")
    print(path)


COMMANDS = {"synth": cmd_synth, "ingest": cmd_ingest, "stats": cmd_stats, "train": cmd_train,
            "explain": cmd_explain, "eval": cmd_eval, "report": cmd_report, "all": cmd_all}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.station, args.out)
        COMMANDS[args.command](cfg)
    except OccurlensError as exc:
        print(f"occurlens: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"occurlens: I/O error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        log.exception("internal error")
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
