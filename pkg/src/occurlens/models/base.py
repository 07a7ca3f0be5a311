from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from ..data import FeatureTable
from ..errors import DegenerateInputError, ParameterError, SchemaError

FORMAT = "occurlens-model"
FORMAT_VERSION = 1


@dataclass
class GBDTParams:
    n_trees: int = 200
    max_depth: int = 4
    learning_rate: float = 0.1
    l2_lambda: float = 1.0
    min_child_weight: float = 1.0

    def __post_init__(self):
        if self.n_trees < 0 or self.max_depth < 1:
            raise ParameterError("n_trees must be >= 0 and max_depth >= 1")
        if not (self.learning_rate > 0 and self.l2_lambda >= 0 and self.min_child_weight >= 0):
            raise ParameterError("learning_rate must be positive, l2_lambda and min_child_weight non-negative")


@dataclass
class MLPParams:
    hidden: tuple[int, ...] = (32, 16)
    dropout: float = 0.1
    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs: int = 200
    patience: int = 10
    val_fraction: float = 0.2

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if any(h < 1 for h in self.hidden):
            raise ParameterError("hidden layer sizes must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ParameterError("dropout must lie in [0, 1)")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0 or self.patience < 1:
            raise ParameterError("invalid MLP optimisation settings")
        if not 0.0 < self.val_fraction < 1.0:
            raise ParameterError("val_fraction must lie in (0, 1)")


@dataclass
class Hyperparams:
    gbdt: GBDTParams = field(default_factory=GBDTParams)
    mlp: MLPParams = field(default_factory=MLPParams)
    seed: int = 0


def params_from_dict(cls, data: Mapping[str, Any] | None):
    data = dict(data or {})
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ParameterError(f"unknown {cls.__name__} keys: {', '.join(sorted(unknown))}")
    return cls(**data)


class TrainedModel:
    """A fitted probability model over a fixed, named feature list."""

    kind = "base"

    def __init__(self, feature_names: Sequence[str], metadata: Mapping[str, Any] | None = None):
        self.feature_names = tuple(feature_names)
        self.metadata = dict(metadata or {})

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _params(self) -> dict:
        raise NotImplementedError

    @classmethod
    def _from_params(cls, feature_names, metadata, params):
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "kind": self.kind,
            "feature_names": list(self.feature_names),
            "metadata": self.metadata,
            "params": self._params(),
        }


def _registry():
    from .gbdt import GBDTModel
    from .mlp import MLPModel
    from .prior import PriorModel

    return {m.kind: m for m in (GBDTModel, MLPModel, PriorModel)}


def model_from_dict(doc: Mapping[str, Any]) -> TrainedModel:
    if doc.get("format") != FORMAT:
        raise SchemaError("not a serialized model")
    if doc.get("version") != FORMAT_VERSION:
        raise SchemaError(f"unsupported model format version {doc.get('version')!r}")
    cls = _registry().get(doc.get("kind"))
    if cls is None:
        raise SchemaError(f"unknown model kind {doc.get('kind')!r}")
    return cls._from_params(doc["feature_names"], doc.get("metadata", {}), doc["params"])


def save_model(model: TrainedModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path) -> TrainedModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def rows_matrix(model: TrainedModel, rows) -> np.ndarray:
    """Feature matrix for ``rows`` (FeatureTable, mapping of columns, or aligned array)."""
    if isinstance(rows, FeatureTable):
        return rows.matrix(model.feature_names)
    if isinstance(rows, Mapping):
        missing = [n for n in model.feature_names if n not in rows]
        if missing:
            raise SchemaError(f"rows lack model features: {', '.join(missing)}")
        return np.column_stack([np.asarray(rows[n], dtype=float) for n in model.feature_names])
    X = np.asarray(rows, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(model.feature_names):
        raise SchemaError(f"expected {len(model.feature_names)} columns")
    return X


def predict_proba(model: TrainedModel, rows) -> np.ndarray:
    """Probability of class 1 for each row, in row order."""
    return model.predict_matrix(rows_matrix(model, rows))


def training_arrays(table: FeatureTable, feature_names: Sequence[str] | None = None):
    """(X, y, names) over the complete labelled rows, checking both classes are present."""
    if table.labels is None:
        raise SchemaError("training table has no labels")
    names = tuple(feature_names or table.names)
    sub = table.select(names)
    keep = sub.complete_rows()
    X = sub.values[keep]
    y = table.labels[keep].astype(np.int64)
    if X.shape[0] < 2:
        raise DegenerateInputError("need at least two complete rows")
    if y.min() == y.max():
        raise DegenerateInputError("training labels contain a single class")
    return X, y, names


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def as_jsonable(params) -> dict:
    d = asdict(params)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
