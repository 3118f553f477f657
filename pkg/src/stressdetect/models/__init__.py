"""Classifiers with a shared train / predict / persist contract.

Model types: ``logreg``, ``svm``, ``dtree``, ``rforest`` and ``gbt``.
"""

from __future__ import annotations

from .base import Classifier, ModelError
from .linear import (
    LinearModel,
    LinearSVMModel,
    LogisticRegressionModel,
    logistic_grad,
    logistic_loss,
    train_logreg,
    train_svm,
)
from .tree import (
    DecisionTreeModel,
    GBTModel,
    RandomForestModel,
    TreeNode,
    majority_vote,
    train_forest,
    train_gbt,
    train_tree,
)

MODEL_CLASSES: dict[str, type[Classifier]] = {
    "logreg": LogisticRegressionModel,
    "svm": LinearSVMModel,
    "dtree": DecisionTreeModel,
    "rforest": RandomForestModel,
    "gbt": GBTModel,
}

DEFAULT_HYPERPARAMS: dict[str, dict] = {
    "logreg": {"lr": 0.1, "max_iters": 200, "tol": 1e-6, "l2": 0.0, "threshold": 0.5},
    "svm": {"lambda": 1e-4, "epochs": 100},
    "dtree": {"max_depth": 5, "min_instances": 1},
    "rforest": {"n_trees": 100, "features_per_split": None, "max_depth": 5,
                "min_instances": 1, "bootstrap": True},
    "gbt": {"n_iterations": 50, "learning_rate": 0.1, "max_depth": 3, "min_instances": 1},
}

# models whose training consumes randomness take the run seed
_SEEDED = {"svm", "rforest"}

MODEL_TYPES = tuple(MODEL_CLASSES)


def resolve_hyperparams(model_type: str, overrides: dict | None = None) -> dict:
    if model_type not in DEFAULT_HYPERPARAMS:
        raise ModelError(f"unknown model type {model_type!r}; choose from {', '.join(MODEL_TYPES)}")
    params = dict(DEFAULT_HYPERPARAMS[model_type])
    for key, value in (overrides or {}).items():
        if key not in params:
            raise ModelError(f"unknown hyperparameter {key!r} for {model_type}")
        params[key] = value
    return params


def train_model(model_type: str, X, y, hyperparams: dict | None = None, seed: int = 0) -> Classifier:
    hp = resolve_hyperparams(model_type, hyperparams)
    if model_type == "logreg":
        return train_logreg(X, y, **hp)
    if model_type == "svm":
        return train_svm(X, y, lam=hp["lambda"], epochs=hp["epochs"], seed=seed)
    if model_type == "dtree":
        return train_tree(X, y, **hp)
    if model_type == "rforest":
        return train_forest(X, y, seed=seed, **hp)
    return train_gbt(X, y, **hp)


__all__ = [
    "Classifier",
    "DEFAULT_HYPERPARAMS",
    "DecisionTreeModel",
    "GBTModel",
    "LinearModel",
    "LinearSVMModel",
    "LogisticRegressionModel",
    "MODEL_CLASSES",
    "MODEL_TYPES",
    "ModelError",
    "RandomForestModel",
    "TreeNode",
    "logistic_grad",
    "logistic_loss",
    "majority_vote",
    "resolve_hyperparams",
    "train_forest",
    "train_gbt",
    "train_logreg",
    "train_model",
    "train_svm",
    "train_tree",
]
