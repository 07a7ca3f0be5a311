"""Fully-connected ReLU network with a sigmoid output, trained by Adam on binary cross-entropy."""

from __future__ import annotations

import numpy as np

from ..data import FeatureTable
from ..errors import DivergenceError
from .base import MLPParams, TrainedModel, as_jsonable, sigmoid, training_arrays


class MLPModel(TrainedModel):
    kind = "mlp"

    def __init__(self, feature_names, weights, biases, metadata=None):
        super().__init__(feature_names, metadata)
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]

    def logits(self, X):
        a = np.asarray(X, dtype=float)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ w + b, 0.0)
        return (a @ self.weights[-1] + self.biases[-1])[:, 0]

    def predict_matrix(self, X):
        return sigmoid(self.logits(X))

    def _params(self):
        return {
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def _from_params(cls, feature_names, metadata, params):
        return cls(feature_names, params["weights"], params["biases"], metadata)


def _init(rng, sizes):
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _bce(logit, y):
    # log(1 + exp(z)) - y z, stable for any sign of z
    return float(np.mean(np.logaddexp(0.0, logit) - y * logit))


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _val_score(model, X, y):
    from ..metrics import roc_auc

    if y.min() == y.max():
        # single-class slice: fall back to negative log-loss
        return -_bce(model.logits(X), y)
    return roc_auc(model.predict_matrix(X), y)


def fit_mlp(X, y, params: MLPParams | None = None, feature_names=None, seed: int = 0) -> MLPModel:
    """Train with seeded shuffling and dropout; early-stop on the trailing validation slice.

    The last ``val_fraction`` of rows (time order) is held out; the weights with
    the best validation AUC are kept, and training stops after ``patience``
    epochs without improvement.
    """
    params = params or MLPParams()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    names = tuple(feature_names or (f"x{j}" for j in range(X.shape[1])))
    rng = np.random.default_rng(seed)
    sizes = [X.shape[1], *params.hidden, 1]
    weights, biases = _init(rng, sizes)
    model = MLPModel(names, weights, biases)

    n_val = max(1, int(round(X.shape[0] * params.val_fraction)))
    if X.shape[0] - n_val < 1:
        n_val = X.shape[0] - 1
    Xt, yt = X[:-n_val], y[:-n_val]
    Xv, yv = X[-n_val:], y[-n_val:]

    flat = [p for pair in zip(model.weights, model.biases) for p in pair]
    opt = _Adam(flat, params.learning_rate)
    keep = 1.0 - params.dropout
    n_layers = len(model.weights)

    best_score = _val_score(model, Xv, yv) if params.epochs else None
    best = ([w.copy() for w in model.weights], [b.copy() for b in model.biases])
    best_epoch, stale, epochs_run = 0, 0, 0
    for epoch in range(1, params.epochs + 1):
        epochs_run = epoch
        perm = rng.permutation(Xt.shape[0])
        total, count = 0.0, 0
        for start in range(0, perm.size, params.batch_size):
            idx = perm[start:start + params.batch_size]
            xb, yb = Xt[idx], yt[idx]
            acts, masks = [xb], []
            a = xb
            for li in range(n_layers - 1):
                z = a @ model.weights[li] + model.biases[li]
                a = np.maximum(z, 0.0)
                if params.dropout > 0:
                    mask = (rng.random(a.shape) < keep) / keep
                    a = a * mask
                else:
                    mask = None
                masks.append((z > 0, mask))
                acts.append(a)
            logit = (a @ model.weights[-1] + model.biases[-1])[:, 0]
            total += _bce(logit, yb) * idx.size
            count += idx.size
            delta = ((sigmoid(logit) - yb) / idx.size)[:, None]
            grads_w = [None] * n_layers
            grads_b = [None] * n_layers
            for li in range(n_layers - 1, -1, -1):
                grads_w[li] = acts[li].T @ delta
                grads_b[li] = delta.sum(axis=0)
                if li:
                    delta = delta @ model.weights[li].T
                    active, mask = masks[li - 1]
                    delta = delta * active
                    if mask is not None:
                        delta = delta * mask
            opt.step(flat, [g for pair in zip(grads_w, grads_b) for g in pair])
        loss = total / max(count, 1)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(w)) for w in model.weights):
            raise DivergenceError(epoch)
        score = _val_score(model, Xv, yv)
        if score > best_score:
            best_score, best_epoch, stale = score, epoch, 0
            best = ([w.copy() for w in model.weights], [b.copy() for b in model.biases])
        else:
            stale += 1
            if stale >= params.patience:
                break

    meta = {
        "seed": seed,
        "hyperparams": as_jsonable(params),
        "n_train": int(Xt.shape[0]),
        "n_val": int(n_val),
        "epochs_run": epochs_run,
        "best_epoch": best_epoch,
        "best_val_score": None if best_score is None else float(best_score),
    }
    return MLPModel(names, best[0], best[1], meta)


def train_mlp(table: FeatureTable, hp: MLPParams | None = None, seed: int = 0, feature_names=None) -> MLPModel:
    X, y, names = training_arrays(table, feature_names)
    model = fit_mlp(X, y, hp, names, seed)
    model.metadata["training_span"] = [str(table.timestamps[0]), str(table.timestamps[-1])]
    return model
