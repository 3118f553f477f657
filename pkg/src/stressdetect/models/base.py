from __future__ import annotations

from typing import Sequence

import numpy as np


class ModelError(ValueError):
    pass


def as_training_data(X, y, *, require_both: bool = True) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2:
        raise ModelError(f"X must be 2-D, got shape {X.shape}")
    if len(X) != len(y):
        raise ModelError(f"X has {len(X)} rows but y has {len(y)} labels")
    if len(X) == 0:
        raise ModelError("empty training set")
    if not np.all(np.isfinite(X)):
        raise ModelError("non-finite feature value in training data")
    if not np.all((y == 0) | (y == 1)):
        raise ModelError("labels must be 0 or 1")
    y = y.astype(np.int64)
    if require_both and (y.min() == y.max()):
        raise ModelError("training labels contain a single class; need both 0 and 1")
    return X, y


def check_vector(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (dim,):
        raise ModelError(f"expected a feature vector of dimension {dim}, got shape {x.shape}")
    return x


class Classifier:
    """Common predict/persist surface shared by every model type."""

    model_type: str = ""

    def predict_one(self, x) -> tuple[int, float]:
        raise NotImplementedError

    def predict(self, X: Sequence) -> np.ndarray:
        return np.array([self.predict_one(x)[0] for x in X], dtype=np.int64)

    def scores(self, X: Sequence) -> np.ndarray:
        return np.array([self.predict_one(x)[1] for x in X], dtype=np.float64)

    def hyperparams(self) -> dict:
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    @classmethod
    def from_params(cls, hyperparams: dict, params: dict) -> "Classifier":
        raise NotImplementedError
