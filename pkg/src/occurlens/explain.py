"""SHAP values under mean imputation, and permutation importance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, ParameterError
from .metrics import roc_auc

MAX_EXACT_FEATURES = 15
_EVAL_BUDGET = 1 << 18  # model rows per batch in exact mode


@dataclass(frozen=True)
class ShapConfig:
    """``background`` holds one mean per feature; out-of-coalition features take these values."""

    background: np.ndarray
    mode: str = "exact"
    sample_count: int = 2048
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "background", np.asarray(self.background, dtype=float).ravel())
        if self.mode not in ("exact", "sampled"):
            raise ParameterError(f"unknown SHAP mode {self.mode!r}")
        if self.mode == "sampled" and self.sample_count < 64:
            raise ParameterError("sampled mode needs at least 64 permutations")


@dataclass
class ShapResult:
    phi: np.ndarray  # (n_rows, M)
    base: float
    stderr: np.ndarray | None = None  # sampled mode only


def _predictor(model):
    return model.predict_matrix if hasattr(model, "predict_matrix") else model


def _shapley_weights(M):
    # weight of a coalition of size s not containing i: s! (M - s - 1)! / M!
    return np.array([math.factorial(s) * math.factorial(M - s - 1) / math.factorial(M) for s in range(M)])


def _exact(f, X, mu):
    n, M = X.shape
    if M > MAX_EXACT_FEATURES:
        raise ParameterError(f"exact SHAP over {M} features is too costly; use mode='sampled'")
    n_sets = 1 << M
    codes = np.arange(n_sets)
    member = ((codes[:, None] >> np.arange(M)) & 1).astype(bool)  # (2^M, M)
    sizes = member.sum(axis=1)
    w = _shapley_weights(M)
    phi = np.zeros((n, M))
    chunk = max(1, _EVAL_BUDGET // n_sets)
    for start in range(0, n, chunk):
        xb = X[start:start + chunk]
        z = np.where(member[None, :, :], xb[:, None, :], mu[None, None, :])
        v = f(z.reshape(-1, M)).reshape(xb.shape[0], n_sets)
        for i in range(M):
            without = codes[~member[:, i]]
            phi[start:start + chunk, i] = (v[:, without | (1 << i)] - v[:, without]) @ w[sizes[without]]
    return phi


def _sampled(f, X, mu, K, rng):
    n, M = X.shape
    phi = np.zeros((n, M))
    se = np.zeros((n, M))
    for r in range(n):
        x = X[r]
        perms = np.argsort(rng.random((K, M)), axis=1)
        # path k: background, then features switched to x one at a time in perms[k] order
        steps = np.broadcast_to(mu, (K, M + 1, M)).copy()
        switched = np.zeros((K, M), dtype=bool)
        rows = np.arange(K)
        for s in range(M):
            switched[rows, perms[:, s]] = True
            steps[:, s + 1, :] = np.where(switched, x, mu)
        v = f(steps.reshape(-1, M)).reshape(K, M + 1)
        contrib = np.empty((K, M))
        contrib[rows[:, None], perms] = np.diff(v, axis=1)
        phi[r] = contrib.mean(axis=0)
        se[r] = contrib.std(axis=0, ddof=1) / math.sqrt(K)
    return phi, se


def shap_matrix(model, X, cfg: ShapConfig) -> ShapResult:
    """SHAP values for every row of ``X``.

    The value of a coalition S is f evaluated with features outside S set to
    their background means. Exact mode enumerates every coalition with the
    Shapley kernel weights; sampled mode averages marginal contributions over
    uniformly drawn feature orderings.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    mu = cfg.background
    if mu.shape != (X.shape[1],):
        raise ParameterError("background must have one value per feature")
    f = _predictor(model)
    base = float(f(mu[None, :])[0])
    if cfg.mode == "exact":
        return ShapResult(_exact(f, X, mu), base)
    phi, se = _sampled(f, X, mu, cfg.sample_count, np.random.default_rng(cfg.seed))
    return ShapResult(phi, base, se)


def shap_values(model, x, cfg: ShapConfig):
    """(phi, base) for a single row."""
    res = shap_matrix(model, np.asarray(x, dtype=float)[None, :], cfg)
    return res.phi[0], res.base


@dataclass(frozen=True)
class ShapSummary:
    mean_abs: np.ndarray
    mean_signed: np.ndarray
    std_abs: np.ndarray
    n_rows: int


def mean_shap(model, X, cfg: ShapConfig) -> ShapSummary:
    """Mean of |phi| and of phi over the rows of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise DegenerateInputError("need at least one row")
    phi = shap_matrix(model, X, cfg).phi
    a = np.abs(phi)
    return ShapSummary(a.mean(axis=0), phi.mean(axis=0), a.std(axis=0), X.shape[0])


def log_loss(y, p):
    p = np.clip(np.asarray(p, dtype=float), 1e-15, 1 - 1e-15)
    y = np.asarray(y, dtype=float)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


def one_minus_auc(y, p):
    return 1.0 - roc_auc(p, y)


LOSSES = {"one_minus_auc": one_minus_auc, "log_loss": log_loss}


@dataclass(frozen=True)
class PermutationResult:
    mean: np.ndarray
    std: np.ndarray
    baseline: float
    degenerate: bool = False
    scores: np.ndarray | None = field(default=None, repr=False)  # (repeats, M) loss increases


def permutation_importance(model, X, y, loss: str = "one_minus_auc", repeats: int = 10, seed: int = 0,
                           noise: str = "permute") -> PermutationResult:
    """Loss increase when one column at a time is scrambled.

    ``noise="permute"`` shuffles the column (keeps its marginal distribution);
    ``noise="uniform"`` replaces it with uniform draws over its observed range.
    """
    if repeats < 1:
        raise ParameterError("repeats must be >= 1")
    if loss not in LOSSES:
        raise ParameterError(f"unknown loss {loss!r}")
    if noise not in ("permute", "uniform"):
        raise ParameterError(f"unknown noise {noise!r}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if y.min() == y.max():
        raise DegenerateInputError("evaluation labels contain a single class")
    f = _predictor(model)
    L = LOSSES[loss]
    base_pred = f(X)
    M = X.shape[1]
    if loss == "one_minus_auc" and np.all(base_pred == base_pred[0]):
        nan = np.full(M, np.nan)
        return PermutationResult(nan, nan, L(y, base_pred), degenerate=True)
    e0 = L(y, base_pred)
    rng = np.random.default_rng(seed)
    scores = np.empty((repeats, M))
    Xp = X.copy()
    for j in range(M):
        col = X[:, j]
        for r in range(repeats):
            if noise == "permute":
                Xp[:, j] = col[rng.permutation(col.size)]
            else:
                Xp[:, j] = rng.uniform(col.min(), col.max(), col.size)
            scores[r, j] = L(y, f(Xp)) - e0
        Xp[:, j] = col
    std = scores.std(axis=0, ddof=1) if repeats > 1 else np.zeros(M)
    return PermutationResult(scores.mean(axis=0), std, e0, scores=scores)


@dataclass
class ImportanceReport:
    features: tuple[str, ...]
    mean_abs_shap: np.ndarray | None = None
    mean_signed_shap: np.ndarray | None = None
    shap_std: np.ndarray | None = None
    perm_mean: np.ndarray | None = None
    perm_std: np.ndarray | None = None
    perm_degenerate: bool = False

    def ranking(self) -> list[str]:
        """Features by decreasing mean |SHAP| (stable for ties)."""
        if self.mean_abs_shap is None:
            return list(self.features)
        order = np.argsort(-np.asarray(self.mean_abs_shap), kind="stable")
        return [self.features[i] for i in order]

    def perm_ranking(self) -> list[str]:
        if self.perm_mean is None or self.perm_degenerate:
            return list(self.features)
        order = np.argsort(-np.asarray(self.perm_mean), kind="stable")
        return [self.features[i] for i in order]
