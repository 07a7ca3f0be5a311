"""Dependency statistics between each feature and the binary label."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import CONTINUOUS, FeatureKind, FeatureTable, class_index
from .errors import DegenerateInputError, ParameterError
from .special import chi2_sf, t_two_sided

IV_BANDS = ((0.02, "insignificant"), (0.1, "weak"), (0.3, "medium"))


@dataclass(frozen=True)
class TestResult:
    feature_name: str
    statistic: float
    p_value: float
    dof: float
    method: str

    __test__ = False  # not a pytest class


@dataclass(frozen=True)
class IvResult:
    feature_name: str
    iv: float
    band: str
    bins: tuple[int, ...] = ()
    woe: tuple[float, ...] = ()


@dataclass(frozen=True)
class CorrelationMatrix:
    names: tuple[str, ...]
    values: np.ndarray
    constant: tuple[str, ...] = field(default=())


def _binary(labels):
    y = np.asarray(labels)
    if not np.isin(y, (0, 1)).all():
        raise DegenerateInputError("labels must be binary")
    return y.astype(np.int64)


def pearson_corr_matrix(table: FeatureTable, include_label: bool = True) -> CorrelationMatrix:
    """Pairwise Pearson correlations over rows with no missing cell.

    Constant columns get correlation 0 with everything else (1 on the diagonal)
    and are listed in ``constant``.
    """
    rows = table.complete_rows()
    x = table.values[rows]
    names = list(table.names)
    if include_label:
        if table.labels is None:
            raise ParameterError("table has no labels")
        x = np.column_stack([x, table.labels[rows]])
        names.append("label")
    if x.shape[0] < 2:
        raise DegenerateInputError("need at least two complete rows")
    centered = x - x.mean(axis=0)
    sd = np.sqrt((centered ** 2).mean(axis=0))
    const = sd == 0
    safe = np.where(const, 1.0, sd)
    z = centered / safe
    r = (z.T @ z) / x.shape[0]
    r[const, :] = 0.0
    r[:, const] = 0.0
    r = np.clip((r + r.T) / 2, -1.0, 1.0)
    np.fill_diagonal(r, 1.0)
    constant = tuple(n for n, c in zip(names, const) if c)
    if constant:
        warnings.warn(f"constant columns correlate 0 by convention: {', '.join(constant)}", stacklevel=2)
    return CorrelationMatrix(tuple(names), r, constant)


def contingency(categories, labels) -> np.ndarray:
    cats = np.asarray(categories)
    y = _binary(labels)
    _, inv = np.unique(cats, return_inverse=True)
    table = np.zeros((inv.max() + 1 if inv.size else 0, 2))
    np.add.at(table, (inv, y), 1)
    return table


def chi_squared_from_table(observed, feature_name: str = "") -> TestResult:
    """Pearson chi-squared independence test on an r x 2 table, no continuity correction."""
    obs = np.asarray(observed, dtype=float)
    obs = obs[obs.sum(axis=1) > 0]
    if obs.shape[0] < 2:
        raise DegenerateInputError("need at least two observed categories")
    n = obs.sum()
    expected = np.outer(obs.sum(axis=1), obs.sum(axis=0)) / n
    cells = expected > 0
    stat = float((((obs - expected) ** 2)[cells] / expected[cells]).sum())
    dof = float((obs.shape[0] - 1) * (obs.shape[1] - 1))
    return TestResult(feature_name, stat, chi2_sf(stat, dof), dof, "chi2")


def chi_squared_test(categories, labels, feature_name: str = "") -> TestResult:
    return chi_squared_from_table(contingency(categories, labels), feature_name)


def t_test_two_sample(values, labels, variant: str = "welch", feature_name: str = "") -> TestResult:
    """Two-sided two-sample t-test of ``values`` between label groups 1 and 0.

    ``variant`` is ``"welch"`` (unequal variances) or ``"pooled"``.
    """
    x = np.asarray(values, dtype=float)
    y = _binary(labels)
    a, b = x[y == 1], x[y == 0]
    return _t_test(a, b, variant, feature_name)


def t_test_groups(a, b, variant: str = "welch", feature_name: str = "") -> TestResult:
    return _t_test(np.asarray(a, dtype=float), np.asarray(b, dtype=float), variant, feature_name)


def _t_test(a, b, variant, feature_name):
    if variant not in ("welch", "pooled"):
        raise ParameterError(f"unknown t-test variant {variant!r}")
    n1, n2 = a.size, b.size
    if n1 < 2 or n2 < 2:
        raise DegenerateInputError("each group needs at least two values")
    m1, m2 = a.mean(), b.mean()
    v1, v2 = a.var(ddof=1), b.var(ddof=1)
    method = f"t-{variant}"
    if v1 == 0 and v2 == 0:
        if m1 == m2:
            return TestResult(feature_name, 0.0, 1.0, float(n1 + n2 - 2), method)
        raise DegenerateInputError("both groups are constant with different means")
    if variant == "pooled":
        dof = n1 + n2 - 2
        sp2 = ((n1 - 1) * v1 + (n2 - 1) * v2) / dof
        se = math.sqrt(sp2 * (1 / n1 + 1 / n2))
    else:
        q1, q2 = v1 / n1, v2 / n2
        se = math.sqrt(q1 + q2)
        dof = (q1 + q2) ** 2 / (q1 ** 2 / (n1 - 1) + q2 ** 2 / (n2 - 1))
    t = (m1 - m2) / se
    return TestResult(feature_name, float(t), t_two_sided(t, dof), float(dof), method)


def bin_index(feature, kind: FeatureKind = CONTINUOUS, m: int = 24) -> np.ndarray:
    """Bin ids: equal-width bins over [0, 1] for continuous, class ids for categorical."""
    x = np.asarray(feature, dtype=float)
    if kind.is_categorical:
        return class_index(x, kind)
    if m < 1:
        raise ParameterError("need at least one bin")
    return np.clip(np.floor(x * m), 0, m - 1).astype(np.int64)


def woe_bins(feature, labels, m: int = 24, kind: FeatureKind = CONTINUOUS, smoothing: float = 0.5):
    """Weight of evidence per non-empty bin.

    Returns ``(bin_ids, woe, p_pos, p_neg)`` where ``p_pos``/``p_neg`` are the
    smoothed class-conditional bin probabilities and woe = log(p_pos / p_neg).
    """
    y = _binary(labels)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise DegenerateInputError("labels must contain both classes")
    bins = bin_index(feature, kind, m)
    ids, inv = np.unique(bins, return_inverse=True)
    pos = np.bincount(inv, weights=y, minlength=ids.size) + smoothing
    neg = np.bincount(inv, weights=1 - y, minlength=ids.size) + smoothing
    p_pos = pos / pos.sum()
    p_neg = neg / neg.sum()
    return ids, np.log(p_pos / p_neg), p_pos, p_neg


def iv_band(iv: float) -> str:
    for limit, name in IV_BANDS[:2]:
        if iv < limit:
            return name
    return "medium" if iv <= IV_BANDS[2][0] else "strong"


def information_value(feature, labels, m: int = 24, kind: FeatureKind = CONTINUOUS,
                      feature_name: str = "") -> IvResult:
    ids, woe, p_pos, p_neg = woe_bins(feature, labels, m, kind)
    # each summand (p - q) * log(p / q) is non-negative
    iv = float(np.sum((p_pos - p_neg) * woe))
    return IvResult(feature_name, iv, iv_band(iv), tuple(int(i) for i in ids), tuple(float(w) for w in woe))


def feature_tests(table: FeatureTable, variant: str = "welch", m: int = 24):
    """Chi-squared for categorical columns, t-test for continuous ones, IV for all.

    Rows with a missing cell in the column under test are skipped.
    Returns ``(tests, ivs)`` in table column order.
    """
    if table.labels is None:
        raise ParameterError("table has no labels")
    tests, ivs = [], []
    for j, name in enumerate(table.names):
        keep = ~table.missing[:, j]
        x, y = table.values[keep, j], table.labels[keep]
        kind = table.kinds[name]
        if kind.is_categorical:
            tests.append(chi_squared_test(class_index(x, kind), y, name))
        else:
            tests.append(t_test_two_sample(x, y, variant, name))
        ivs.append(information_value(x, y, m, kind, name))
    return tests, ivs
