"""Hour-of-day baseline: score each row by the training event rate of its hour."""

from __future__ import annotations

import numpy as np

from ..data import TIME_KINDS, FeatureTable, class_index
from ..errors import DegenerateInputError, SchemaError
from .base import TrainedModel


class PriorModel(TrainedModel):
    kind = "prior"

    def __init__(self, rates, hour_feature: str = "hour", metadata=None):
        super().__init__((hour_feature,), metadata)
        self.rates = np.asarray(rates, dtype=float)
        if self.rates.shape != (24,):
            raise SchemaError("prior needs 24 hourly rates")

    @property
    def hour_feature(self):
        return self.feature_names[0]

    def predict_matrix(self, X):
        hours = class_index(np.asarray(X, dtype=float)[:, 0], TIME_KINDS["hour"])
        return self.rates[np.clip(hours, 0, 23)]

    def classify(self, X, c: float) -> np.ndarray:
        """Hard prediction: 1 where the hour's event rate is at least ``c``."""
        return (self.predict_matrix(X) >= c).astype(np.int8)

    def _params(self):
        return {"rates": self.rates.tolist()}

    @classmethod
    def _from_params(cls, feature_names, metadata, params):
        return cls(params["rates"], feature_names[0], metadata)


def fit_prior(hours, labels, hour_feature: str = "hour") -> PriorModel:
    """Empirical P[label = 1 | hour] for integer hours 0..23; unseen hours get the global rate."""
    hours = np.asarray(hours, dtype=np.int64)
    y = np.asarray(labels, dtype=float)
    if hours.shape != y.shape or hours.size == 0:
        raise DegenerateInputError("need aligned, non-empty hours and labels")
    if hours.min() < 0 or hours.max() > 23:
        raise DegenerateInputError("hours must lie in 0..23")
    events = np.bincount(hours, weights=y, minlength=24)
    seen = np.bincount(hours, minlength=24)
    overall = y.mean()
    rates = np.where(seen > 0, events / np.maximum(seen, 1), overall)
    meta = {"hour_counts": seen.tolist(), "global_rate": float(overall), "n_train": int(hours.size)}
    return PriorModel(rates, hour_feature, meta)


def train_prior(table: FeatureTable, hour_feature: str = "hour") -> PriorModel:
    if table.labels is None:
        raise SchemaError("training table has no labels")
    j = table.index(hour_feature)
    keep = ~table.missing[:, j]
    hours = class_index(table.values[keep, j], TIME_KINDS["hour"])
    model = fit_prior(hours, table.labels[keep], hour_feature)
    model.metadata["training_span"] = [str(table.timestamps[0]), str(table.timestamps[-1])]
    return model
