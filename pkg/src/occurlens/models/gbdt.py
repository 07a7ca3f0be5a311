"""Second-order gradient boosting of depth-limited regression trees on logistic loss."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..data import FeatureTable
from .base import GBDTParams, TrainedModel, as_jsonable, sigmoid, training_arrays


@dataclass
class Tree:
    """Flat node arrays. Leaves have feature -1 and point to themselves."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: int

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        n, p = X.shape
        flat = X.ravel()
        offsets = np.arange(n) * p
        feat = np.maximum(self.feature, 0)
        # children stored as [right, left] so the boolean test indexes directly
        children = np.stack([self.right, self.left], axis=1).ravel()
        node = np.zeros(n, dtype=np.int64)
        for _ in range(self.depth):
            go_left = flat.take(offsets + feat.take(node)) < self.threshold.take(node)
            node = children.take(2 * node + go_left)
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": [None if math.isinf(t) else float(t) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "depth": self.depth,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray([np.inf if t is None else t for t in d["threshold"]], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=float),
            int(d["depth"]),
        )


class GBDTModel(TrainedModel):
    kind = "gbdt"

    def __init__(self, feature_names, base_score: float, trees: list[Tree], metadata=None):
        super().__init__(feature_names, metadata)
        self.base_score = float(base_score)
        self.trees = list(trees)

    def raw_score(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            out += tree.predict(X)
        return out

    def predict_matrix(self, X):
        return sigmoid(self.raw_score(X))

    def _params(self):
        return {"base_score": self.base_score, "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def _from_params(cls, feature_names, metadata, params):
        return cls(feature_names, params["base_score"], [Tree.from_dict(t) for t in params["trees"]], metadata)


def _best_split(x_sorted, g_sorted, h_sorted, g_tot, h_tot, lam, mcw):
    """Best (gain, position) for one feature; position k splits after the k-th sorted row."""
    GL = np.cumsum(g_sorted)[:-1]
    HL = np.cumsum(h_sorted)[:-1]
    valid = x_sorted[1:] != x_sorted[:-1]
    GR = g_tot - GL
    HR = h_tot - HL
    valid &= (HL >= mcw) & (HR >= mcw)
    if not valid.any():
        return -np.inf, -1
    gain = GL ** 2 / (HL + lam) + GR ** 2 / (HR + lam) - g_tot ** 2 / (h_tot + lam)
    gain = np.where(valid, gain, -np.inf)
    k = int(np.argmax(gain))
    return float(gain[k]), k


def _grow_tree(X, order, g, h, params: GBDTParams) -> Tree:
    n, p = X.shape
    lam, mcw = params.l2_lambda, params.min_child_weight
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(np.inf)
        left.append(len(left))
        right.append(len(right))
        value.append(0.0)
        return len(feature) - 1

    # frontier entries: (node id, per-feature sorted row indices)
    frontier = [(new_node(), [order[:, j] for j in range(p)])]
    for _depth in range(params.max_depth + 1):
        nxt = []
        for node, sorted_rows in frontier:
            rows = sorted_rows[0] if p else np.arange(n)
            g_tot, h_tot = g[rows].sum(), h[rows].sum()
            value[node] = -g_tot / (h_tot + lam) * params.learning_rate
            if _depth == params.max_depth or rows.size < 2:
                continue
            best = (0.0, -1, -1)
            for j in range(p):
                s = sorted_rows[j]
                gain, k = _best_split(X[s, j], g[s], h[s], g_tot, h_tot, lam, mcw)
                if gain > best[0]:
                    best = (gain, j, k)
            gain, j, k = best
            if j < 0:
                continue
            s = sorted_rows[j]
            lo, hi = X[s[k], j], X[s[k + 1], j]
            thr = lo + (hi - lo) / 2.0
            if thr <= lo:
                thr = hi
            go_left = np.zeros(n, dtype=bool)
            go_left[s[: k + 1]] = True
            l_id, r_id = new_node(), new_node()
            feature[node], threshold[node] = j, thr
            left[node], right[node] = l_id, r_id
            nxt.append((l_id, [r[go_left[r]] for r in sorted_rows]))
            nxt.append((r_id, [r[~go_left[r]] for r in sorted_rows]))
        frontier = nxt
        if not frontier:
            break
    return Tree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=float),
        params.max_depth,
    )


def fit_gbdt(X, y, params: GBDTParams | None = None, feature_names=None, seed: int = 0) -> GBDTModel:
    """Newton boosting: each tree fits gradient/hessian statistics of the log-loss.

    Split search is exact and greedy; there is no sampling, so ``seed`` is only
    recorded in the metadata and the fit is a pure function of the data.
    """
    params = params or GBDTParams()
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    names = tuple(feature_names or (f"x{j}" for j in range(X.shape[1])))
    rate = y.mean()
    base = math.log(rate / (1 - rate))
    order = np.argsort(X, axis=0, kind="stable")
    raw = np.full(X.shape[0], base)
    trees = []
    for _ in range(params.n_trees):
        prob = sigmoid(raw)
        g = prob - y
        h = prob * (1 - prob)
        tree = _grow_tree(X, order, g, h, params)
        trees.append(tree)
        raw += tree.predict(X)
    meta = {"seed": seed, "hyperparams": as_jsonable(params), "n_train": int(X.shape[0]),
            "base_rate": float(rate)}
    return GBDTModel(names, base, trees, meta)


def train_gbdt(table: FeatureTable, hp: GBDTParams | None = None, seed: int = 0, feature_names=None) -> GBDTModel:
    X, y, names = training_arrays(table, feature_names)
    model = fit_gbdt(X, y, hp, names, seed)
    model.metadata["training_span"] = [str(table.timestamps[0]), str(table.timestamps[-1])]
    return model
