"""PNG figures for a station report: correlations, IVs, ROC, precision curves, importances."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import numpy as np  # noqa: E402
from matplotlib import rc_context  # noqa: E402
from matplotlib.backends.backend_agg import FigureCanvasAgg  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from .stats import IV_BANDS  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}
MODEL_COLORS = {"gbdt": "#1f77b4", "mlp": "#d62728", "prior": "#7f7f7f"}


def new_figure(width=5.0, height=3.5, nrows=1, ncols=1):
    fig = Figure(figsize=(width, height))
    FigureCanvasAgg(fig)
    axes = fig.subplots(nrows, ncols)
    return fig, axes


def save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    # no software/date stamp so reruns give identical files
    fig.savefig(path, format="png", metadata={"Software": None})


def corr_heatmap(corr, path):
    n = len(corr.names)
    fig, ax = new_figure(1.0 + 0.35 * n, 0.8 + 0.35 * n)
    im = ax.imshow(corr.values, vmin=-1, vmax=1, cmap="RdBu_r")
    ax.set_xticks(range(n), corr.names, rotation=90)
    ax.set_yticks(range(n), corr.names)
    fig.colorbar(im, ax=ax, shrink=0.8, label="Pearson r")
    ax.set_title("Feature correlations")
    save(fig, path)


def iv_bars(ivs, path):
    names = [r.feature_name for r in ivs]
    vals = np.array([r.iv for r in ivs])
    fig, ax = new_figure(5.0, 0.6 + 0.25 * len(names))
    y = np.arange(len(names))
    ax.barh(y, vals, color="#4c72b0")
    ax.set_yticks(y, names)
    ax.invert_yaxis()
    for limit, _ in IV_BANDS:
        ax.axvline(limit, color="0.6", lw=0.8, ls="--")
    ax.set_xlabel("information value")
    save(fig, path)


def roc_plot(metrics, path):
    fig, ax = new_figure(4.0, 4.0)
    ax.plot([0, 1], [0, 1], color="0.7", lw=0.8, ls=":")
    for kind, m in sorted(metrics.items()):
        if m.fpr is None:
            continue
        ax.plot(m.fpr, m.tpr, color=MODEL_COLORS.get(kind), lw=1.2, label=f"{kind} (AUC {m.auc:.3f})")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.legend(loc="lower right", frameon=False)
    save(fig, path)


def precision_plot(metrics, path):
    fig, (ax, ax2) = new_figure(7.0, 3.2, ncols=2)
    for kind, m in sorted(metrics.items()):
        if m.curve is None:
            continue
        color = MODEL_COLORS.get(kind)
        ax.plot(m.curve.thresholds, m.curve.precision, color=color, lw=1.0, label=kind)
        ax2.plot(m.curve.thresholds, m.curve.frac_predicted_zero, color=color, lw=1.0, label=kind)
        for g in m.gammas:
            if g.feasible:
                ax.plot([g.threshold], [g.value], "o", color=color, ms=4)
    ax.set_xlabel("threshold c")
    ax.set_ylabel("precision P(c)")
    ax2.set_xlabel("threshold c")
    ax2.set_ylabel("share predicted zero")
    ax.legend(frameon=False)
    save(fig, path)


def importance_bars(features, values, path, xlabel, err=None):
    order = np.argsort(-np.asarray(values), kind="stable")
    fig, ax = new_figure(5.0, 0.6 + 0.25 * len(features))
    y = np.arange(len(features))
    ax.barh(y, np.asarray(values)[order], xerr=None if err is None else np.asarray(err)[order],
            color="#55a868", ecolor="0.3")
    ax.set_yticks(y, [features[i] for i in order])
    ax.invert_yaxis()
    ax.set_xlabel(xlabel)
    save(fig, path)


def station_figures(res, out_dir) -> list[Path]:
    """Render every figure the station's results support; returns written paths."""
    out_dir = Path(out_dir)
    written = []
    with rc_context(STYLE):
        if res.analysis is not None:
            corr_heatmap(res.analysis.corr, out_dir / "corr.png")
            iv_bars(res.analysis.ivs, out_dir / "iv.png")
            written += [out_dir / "corr.png", out_dir / "iv.png"]
        if any(m.fpr is not None for m in res.metrics.values()):
            roc_plot(res.metrics, out_dir / "roc.png")
            precision_plot(res.metrics, out_dir / "precision_curve.png")
            written += [out_dir / "roc.png", out_dir / "precision_curve.png"]
        for kind, rep in sorted(res.importance.items()):
            if rep.mean_abs_shap is not None:
                p = out_dir / f"shap_{kind}.png"
                importance_bars(rep.features, rep.mean_abs_shap, p, "mean |SHAP|")
                written.append(p)
            if rep.perm_mean is not None and not rep.perm_degenerate:
                p = out_dir / f"perm_{kind}.png"
                importance_bars(rep.features, rep.perm_mean, p, "loss increase", rep.perm_std)
                written.append(p)
    return written
