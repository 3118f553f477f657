"""Logistic regression (full-batch gradient descent) and linear SVM (Pegasos).

Both score a sample with the linear decision value ``f(x) = w . x + b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .base import Classifier, ModelError, as_training_data, check_vector


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = float(self.bias)
        if not (np.all(np.isfinite(self.weights)) and math.isfinite(self.bias)):
            raise ModelError("non-finite linear model parameters")

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def decision(self, x) -> float:
        x = check_vector(x, self.dim)
        return float(np.dot(self.weights, x)) + self.bias


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def logistic_loss(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float = 0.0) -> float:
    """Mean log-loss plus ``l2/2 * ||w||^2`` (bias unregularized)."""
    z = X @ w + b
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * np.dot(w, w))


def logistic_grad(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray,
                  l2: float = 0.0) -> tuple[np.ndarray, float]:
    z = X @ w + b
    p = 0.5 * (1.0 + np.tanh(0.5 * z))
    r = p - y
    return X.T @ r / len(y) + l2 * w, float(np.mean(r))


@dataclass
class LogisticRegressionModel(Classifier):
    linear: LinearModel
    threshold: float = 0.5
    lr: float = 0.1
    max_iters: int = 200
    tol: float = 1e-6
    l2: float = 0.0
    history: list[float] = field(default_factory=list, repr=False, compare=False)

    model_type = "logreg"

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ModelError("threshold must lie strictly between 0 and 1")

    def predict_proba(self, x) -> float:
        return sigmoid(self.linear.decision(x))

    def predict_one(self, x) -> tuple[int, float]:
        score = self.predict_proba(x)
        return (1 if score >= self.threshold else 0), score

    def hyperparams(self) -> dict:
        return {"lr": self.lr, "max_iters": self.max_iters, "tol": self.tol,
                "l2": self.l2, "threshold": self.threshold}

    def params(self) -> dict:
        return {"weights": self.linear.weights.tolist(), "bias": self.linear.bias}

    @classmethod
    def from_params(cls, hyperparams: dict, params: dict) -> "LogisticRegressionModel":
        return cls(LinearModel(params["weights"], params["bias"]), **hyperparams)


def train_logreg(X, y, lr: float = 0.1, max_iters: int = 200, tol: float = 1e-6,
                 l2: float = 0.0, threshold: float = 0.5) -> LogisticRegressionModel:
    X, y = as_training_data(X, y)
    yf = y.astype(np.float64)
    w = np.zeros(X.shape[1])
    b = 0.0
    loss = logistic_loss(w, b, X, yf, l2)
    history = [loss]
    for _ in range(max_iters):
        gw, gb = logistic_grad(w, b, X, yf, l2)
        w = w - lr * gw
        b = b - lr * gb
        new_loss = logistic_loss(w, b, X, yf, l2)
        history.append(new_loss)
        converged = abs(loss - new_loss) < tol
        loss = new_loss
        if converged:
            break
    return LogisticRegressionModel(LinearModel(w, b), threshold, lr, max_iters, tol, l2, history)


@dataclass
class LinearSVMModel(Classifier):
    linear: LinearModel
    lam: float = 1e-4
    epochs: int = 100
    seed: int = 0
    history: list[float] = field(default_factory=list, repr=False, compare=False)

    model_type = "svm"

    def predict_one(self, x) -> tuple[int, float]:
        f = self.linear.decision(x)
        return (1 if f >= 0 else 0), f

    def hyperparams(self) -> dict:
        return {"lambda": self.lam, "epochs": self.epochs, "seed": self.seed}

    def params(self) -> dict:
        return {"weights": self.linear.weights.tolist(), "bias": self.linear.bias}

    @classmethod
    def from_params(cls, hyperparams: dict, params: dict) -> "LinearSVMModel":
        return cls(LinearModel(params["weights"], params["bias"]),
                   hyperparams["lambda"], hyperparams["epochs"], hyperparams["seed"])


def hinge_objective(w: np.ndarray, b: float, X: np.ndarray, signs: np.ndarray, lam: float) -> float:
    """``lam/2 * (||w||^2 + b^2) + mean(max(0, 1 - y f(x)))``; the bias is
    regularized because it is trained as a weight on a constant feature."""
    margins = signs * (X @ w + b)
    return float(0.5 * lam * (np.dot(w, w) + b * b) + np.mean(np.maximum(0.0, 1.0 - margins)))


def train_svm(X, y, lam: float = 1e-4, epochs: int = 100, seed: int = 0) -> LinearSVMModel:
    """Pegasos: one stochastic sub-gradient step per sample, step size 1/(lam*t)."""
    if lam <= 0:
        raise ModelError("lambda must be positive")
    X, y = as_training_data(X, y)
    n, d = X.shape
    signs = np.where(y == 1, 1.0, -1.0)
    Xa = np.hstack([X, np.ones((n, 1))])
    rng = np.random.default_rng(seed)

    # w = scale * v keeps the per-step shrink O(1)
    v = np.zeros(d + 1)
    scale = 1.0
    t = 0
    history = [hinge_objective(np.zeros(d), 0.0, X, signs, lam)]
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            margin = signs[i] * scale * float(np.dot(v, Xa[i]))
            shrink = 1.0 - eta * lam
            if shrink <= 0.0:
                v[:] = 0.0
                scale = 1.0
            else:
                scale *= shrink
            if margin < 1.0:
                v += (eta * signs[i] / scale) * Xa[i]
        wa = scale * v
        history.append(hinge_objective(wa[:d], wa[d], X, signs, lam))
    wa = scale * v
    return LinearSVMModel(LinearModel(wa[:d], wa[d]), lam, epochs, seed, history)
