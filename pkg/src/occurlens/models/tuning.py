"""Seeded random hyperparameter search scored by mean AUC over time-blocked folds."""

from __future__ import annotations

import logging
import math
from dataclasses import replace

import numpy as np

from ..data import FeatureTable
from ..errors import DegenerateInputError, ParameterError
from .base import GBDTParams, MLPParams, training_arrays
from .gbdt import fit_gbdt
from .mlp import fit_mlp

log = logging.getLogger(__name__)

GBDT_SPACE = {
    "n_trees": ("int", 50, 400),
    "max_depth": ("int", 2, 6),
    "learning_rate": ("log", 0.01, 0.3),
    "l2_lambda": ("log", 0.1, 10.0),
    "min_child_weight": ("log", 0.5, 50.0),
}

MLP_SPACE = {
    "hidden": ("choice", [(16,), (32, 16), (64, 32)]),
    "dropout": ("uniform", 0.0, 0.3),
    "learning_rate": ("log", 1e-4, 1e-2),
    "batch_size": ("choice", [128, 256, 512]),
}

_FIT = {"gbdt": (fit_gbdt, GBDTParams, GBDT_SPACE), "mlp": (fit_mlp, MLPParams, MLP_SPACE)}


def sample_config(space, rng):
    out = {}
    for name in sorted(space):
        spec = space[name]
        kind = spec[0]
        if kind == "int":
            out[name] = int(rng.integers(spec[1], spec[2] + 1))
        elif kind == "uniform":
            out[name] = float(rng.uniform(spec[1], spec[2]))
        elif kind == "log":
            out[name] = float(math.exp(rng.uniform(math.log(spec[1]), math.log(spec[2]))))
        elif kind == "choice":
            options = spec[1]
            out[name] = options[int(rng.integers(len(options)))]
        else:
            raise ParameterError(f"unknown search dimension kind {kind!r} for {name!r}")
    return out


def time_folds(n: int, k: int):
    """Contiguous (train_idx, valid_idx) blocks in time order."""
    edges = np.linspace(0, n, k + 1).astype(int)
    for i in range(k):
        valid = np.arange(edges[i], edges[i + 1])
        train = np.r_[np.arange(0, edges[i]), np.arange(edges[i + 1], n)]
        yield train, valid


def cv_auc(fit, X, y, params, k_folds, seed, feature_names):
    from ..metrics import roc_auc

    scores = []
    for train, valid in time_folds(X.shape[0], k_folds):
        yt, yv = y[train], y[valid]
        if yt.min() == yt.max() or yv.min() == yv.max():
            continue
        model = fit(X[train], yt, params, feature_names, seed)
        scores.append(roc_auc(model.predict_matrix(X[valid]), yv))
    if not scores:
        raise DegenerateInputError("every cross-validation fold has a single class")
    return float(np.mean(scores))


def tune_random_search(table: FeatureTable, kind: str = "gbdt", space=None, k_folds: int = 5,
                       budget: int = 0, seed: int = 0, defaults=None, feature_names=None):
    """Return the sampled configuration with the best mean fold AUC (defaults when budget is 0)."""
    if kind not in _FIT:
        raise ParameterError(f"no search for model kind {kind!r}")
    if budget < 0 or k_folds < 2:
        raise ParameterError("budget must be >= 0 and k_folds >= 2")
    fit, cls, default_space = _FIT[kind]
    base = defaults or cls()
    if budget == 0:
        return base
    space = space or default_space
    X, y, names = training_arrays(table, feature_names)
    rng = np.random.default_rng(seed)
    best, best_score = None, -np.inf
    for trial in range(budget):
        params = replace(base, **sample_config(space, rng))
        score = cv_auc(fit, X, y, params, k_folds, seed, names)
        log.info("%s trial %d: cv auc %.5f %s", kind, trial, score, params)
        if score > best_score:
            best, best_score = params, score
    return best
