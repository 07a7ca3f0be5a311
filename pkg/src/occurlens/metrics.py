"""AUC, class-zero precision curves and gamma-precision."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ParameterError


def _check(scores, labels):
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ParameterError("scores and labels must be 1-d and the same length")
    if not np.isin(y, (0, 1)).all():
        raise ParameterError("labels must be binary")
    n_pos = int(np.count_nonzero(y == 1))
    if n_pos == 0 or n_pos == y.size:
        raise DegenerateInputError("AUC needs both classes")
    return s, y.astype(bool), n_pos, y.size - n_pos


def midranks(x) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    x = np.asarray(x)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    starts = np.r_[0, np.flatnonzero(xs[1:] != xs[:-1]) + 1]
    ends = np.r_[starts[1:], xs.size]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(x.size)
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def roc_auc(scores, labels) -> float:
    """Probability that a positive outscores a negative, ties counted half (Mann-Whitney U)."""
    s, pos, n_pos, n_neg = _check(scores, labels)
    r = midranks(s)
    u = r[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(scores, labels):
    """ROC polyline vertices ``(fpr, tpr)`` from (0, 0) to (1, 1), one step per distinct score."""
    s, pos, n_pos, n_neg = _check(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    ss, yy = s[order], pos[order]
    last = np.r_[np.flatnonzero(ss[1:] != ss[:-1]), ss.size - 1]
    tp = np.cumsum(yy)[last]
    fp = (last + 1) - tp
    return np.r_[0.0, fp / n_neg], np.r_[0.0, tp / n_pos]


def trapezoid_auc(fpr, tpr) -> float:
    fpr = np.asarray(fpr, dtype=float)
    tpr = np.asarray(tpr, dtype=float)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


@dataclass(frozen=True)
class PrecisionCurve:
    thresholds: np.ndarray
    precision: np.ndarray
    frac_predicted_zero: np.ndarray
    n_predicted_zero: np.ndarray
    n: int

    def at(self, c: float) -> float:
        hit = np.flatnonzero(self.thresholds == c)
        if not hit.size:
            raise KeyError(c)
        return float(self.precision[hit[0]])


def precision_curve(prob_zero, labels, grid=None) -> PrecisionCurve:
    """Precision of the class-zero prediction ``prob_zero >= c`` for each threshold c.

    The default grid is the distinct probabilities plus 0 and 1. Thresholds that
    predict no zero are dropped, except c = 1 whose precision is then defined as 1.
    """
    p = np.asarray(prob_zero, dtype=float)
    y = np.asarray(labels)
    if p.shape != y.shape:
        raise ParameterError("prob_zero and labels must align")
    if np.any((p < 0) | (p > 1)):
        raise ParameterError("prob_zero must lie in [0, 1]")
    if grid is None:
        grid = np.union1d(np.unique(p), [0.0, 1.0])
    else:
        grid = np.unique(np.asarray(grid, dtype=float))
    n = p.size
    order = np.argsort(p, kind="mergesort")
    ps = p[order]
    zeros_sorted = (y[order] == 0).astype(np.int64)
    # suffix sums: rows with p >= c are those from searchsorted(left) onwards
    suffix_zero = np.r_[np.cumsum(zeros_sorted[::-1])[::-1], 0]
    start = np.searchsorted(ps, grid, side="left")
    n_pred = n - start
    n_true = suffix_zero[start]
    keep = (n_pred > 0) | (grid == 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        prec = np.where(n_pred > 0, n_true / np.maximum(n_pred, 1), 1.0)
    grid, prec, n_pred = grid[keep], prec[keep], n_pred[keep]
    frac = n_pred / n if n else np.zeros_like(prec)
    return PrecisionCurve(grid, prec, frac, n_pred, n)


@dataclass(frozen=True)
class GammaPrecision:
    gamma: float
    value: float | None
    threshold: float | None

    @property
    def feasible(self):
        return self.value is not None


def gamma_precision(curve: PrecisionCurve, gamma: float = 0.01) -> GammaPrecision:
    """Best precision over thresholds predicting strictly more than ``n * gamma`` zeros.

    Ties go to the largest (most conservative) threshold; no qualifying
    threshold gives an infeasible result.
    """
    if not 0.0 <= gamma < 1.0:
        raise ParameterError("gamma must lie in [0, 1)")
    ok = curve.n_predicted_zero > curve.n * gamma
    if not ok.any():
        return GammaPrecision(gamma, None, None)
    prec = np.where(ok, curve.precision, -np.inf)
    best = prec.max()
    i = int(np.flatnonzero(prec == best)[-1])
    return GammaPrecision(gamma, float(best), float(curve.thresholds[i]))
