"""CART-style binary trees, random forests and gradient-boosted trees.

Split search is exhaustive over the candidate features: thresholds are the
midpoints between consecutive distinct sorted values, and a row goes left when
``x[feature] <= threshold``. Ties between equally good splits resolve to the
lower feature index, then the lower threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .base import Classifier, ModelError, as_training_data, check_vector

_TIE_EPS = 1e-12


@dataclass
class TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    # leaf payload: class counts (classification) and the leaf output
    counts: tuple[int, int] | None = None
    value: float = 0.0
    n_samples: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def leaf_for(self, x: np.ndarray) -> "TreeNode":
        node = self
        while node.left is not None:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def leaves(self) -> list["TreeNode"]:
        if self.is_leaf:
            return [self]
        return self.left.leaves() + self.right.leaves()


def tree_to_list(root: TreeNode) -> list[list]:
    """Pre-order flat encoding. Internal nodes are ``["s", feature, threshold]``,
    classification leaves ``["c", n0, n1, value, n_samples]`` and regression
    leaves ``["r", value, n_samples]``."""
    out: list[list] = []
    stack = [root]
    while stack:
        node = stack.pop()
        if node.is_leaf:
            if node.counts is not None:
                out.append(["c", node.counts[0], node.counts[1], node.value, node.n_samples])
            else:
                out.append(["r", node.value, node.n_samples])
        else:
            out.append(["s", node.feature, node.threshold])
            stack.append(node.right)
            stack.append(node.left)
    return out


def tree_from_list(items: list[list]) -> TreeNode:
    pos = 0

    def build() -> TreeNode:
        nonlocal pos
        if pos >= len(items):
            raise ModelError("truncated tree encoding")
        item = items[pos]
        pos += 1
        kind = item[0]
        if kind == "s":
            node = TreeNode(feature=int(item[1]), threshold=float(item[2]))
            node.left = build()
            node.right = build()
            return node
        if kind == "c":
            return TreeNode(counts=(int(item[1]), int(item[2])), value=float(item[3]),
                            n_samples=int(item[4]))
        if kind == "r":
            return TreeNode(value=float(item[1]), n_samples=int(item[2]))
        raise ModelError(f"unknown tree node kind {kind!r}")

    root = build()
    if pos != len(items):
        raise ModelError("trailing data in tree encoding")
    return root


def _gini_scores(c1_left: np.ndarray, n_left: np.ndarray, c1_total: int, n: int) -> np.ndarray:
    n_right = n - n_left
    c1_right = c1_total - c1_left
    pl = c1_left / n_left
    pr = c1_right / n_right
    gini_l = 1.0 - pl * pl - (1.0 - pl) * (1.0 - pl)
    gini_r = 1.0 - pr * pr - (1.0 - pr) * (1.0 - pr)
    return (n_left * gini_l + n_right * gini_r) / n


def _sse_scores(s_left: np.ndarray, q_left: np.ndarray, n_left: np.ndarray,
                s_total: float, q_total: float, n: int) -> np.ndarray:
    n_right = n - n_left
    s_right = s_total - s_left
    q_right = q_total - q_left
    return (q_left - s_left * s_left / n_left) + (q_right - s_right * s_right / n_right)


def best_split(X: np.ndarray, target: np.ndarray, features, min_instances: int,
               task: str) -> tuple[int, float, float] | None:
    """Best ``(feature, threshold, score)`` over ``features`` or ``None``.

    ``score`` is weighted Gini impurity for classification and the summed
    squared error of both children for regression; lower is better.
    """
    n = len(target)
    if n < 2 * min_instances:
        return None
    best = None
    for f in sorted(features):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ts = target[order]
        # boundary after position i (0-based); left child holds i+1 rows
        i = np.nonzero(xs[:-1] < xs[1:])[0]
        n_left = i + 1
        ok = (n_left >= min_instances) & (n - n_left >= min_instances)
        i, n_left = i[ok], n_left[ok]
        if len(i) == 0:
            continue
        if task == "classification":
            cum = np.cumsum(ts)
            scores = _gini_scores(cum[i], n_left, int(cum[-1]), n)
        else:
            cs = np.cumsum(ts)
            cq = np.cumsum(ts * ts)
            scores = _sse_scores(cs[i], cq[i], n_left, float(cs[-1]), float(cq[-1]), n)
        low = scores.min()
        j = int(np.nonzero(scores <= low + _TIE_EPS * max(1.0, abs(low)))[0][0])
        score = float(scores[j])
        if best is None or score < best[2] - _TIE_EPS * max(1.0, abs(best[2])):
            lo, hi = xs[i[j]], xs[i[j] + 1]
            thr = lo + (hi - lo) / 2.0
            if not lo <= thr < hi:
                thr = lo
            best = (f, float(thr), score)
    return best


def build_tree(X: np.ndarray, target: np.ndarray, *, task: str = "classification",
               max_depth: int | None = 5, min_instances: int = 1,
               features_per_split: int | None = None,
               rng: np.random.Generator | None = None) -> TreeNode:
    n_features = X.shape[1]
    if features_per_split is not None and not 1 <= features_per_split <= n_features:
        raise ModelError(f"features_per_split must lie in [1, {n_features}]")

    def leaf(idx: np.ndarray) -> TreeNode:
        t = target[idx]
        if task == "classification":
            n1 = int(t.sum())
            n0 = len(t) - n1
            return TreeNode(counts=(n0, n1), value=1.0 if n1 > n0 else 0.0, n_samples=len(t))
        return TreeNode(value=float(t.mean()) if len(t) else 0.0, n_samples=len(t))

    def grow(idx: np.ndarray, depth: int) -> TreeNode:
        t = target[idx]
        if (max_depth is not None and depth >= max_depth) or len(idx) < 2 * min_instances \
                or np.all(t == t[0]):
            return leaf(idx)
        if features_per_split is None or rng is None:
            candidates = range(n_features)
        else:
            candidates = rng.choice(n_features, size=features_per_split, replace=False).tolist()
        split = best_split(X[idx], t, candidates, min_instances, task)
        if split is None:
            return leaf(idx)
        f, thr, _ = split
        go_left = X[idx, f] <= thr
        node = TreeNode(feature=f, threshold=thr, n_samples=len(idx))
        node.left = grow(idx[go_left], depth + 1)
        node.right = grow(idx[~go_left], depth + 1)
        return node

    return grow(np.arange(len(target)), 0)


@dataclass
class DecisionTreeModel(Classifier):
    root: TreeNode
    n_features: int
    max_depth: int | None = 5
    min_instances: int = 1

    model_type = "dtree"

    def predict_one(self, x) -> tuple[int, float]:
        x = check_vector(x, self.n_features)
        return int(self.root.leaf_for(x).value), 1.0

    def hyperparams(self) -> dict:
        return {"max_depth": self.max_depth, "min_instances": self.min_instances}

    def params(self) -> dict:
        return {"n_features": self.n_features, "tree": tree_to_list(self.root)}

    @classmethod
    def from_params(cls, hyperparams: dict, params: dict) -> "DecisionTreeModel":
        return cls(tree_from_list(params["tree"]), params["n_features"],
                   hyperparams["max_depth"], hyperparams["min_instances"])


def train_tree(X, y, max_depth: int | None = 5, min_instances: int = 1) -> DecisionTreeModel:
    if min_instances < 1:
        raise ModelError("min_instances must be >= 1")
    X, y = as_training_data(X, y, require_both=False)
    root = build_tree(X, y, max_depth=max_depth, min_instances=min_instances)
    return DecisionTreeModel(root, X.shape[1], max_depth, min_instances)


def majority_vote(votes) -> int:
    """1 only on a strict majority of ones; ties go to 0."""
    votes = list(votes)
    return 1 if 2 * sum(votes) > len(votes) else 0


@dataclass
class RandomForestModel(Classifier):
    trees: list[TreeNode]
    n_features: int
    n_trees: int = 100
    features_per_split: int | None = None
    max_depth: int | None = 5
    min_instances: int = 1
    bootstrap: bool = True
    seed: int = 0

    model_type = "rforest"

    def tree_votes(self, x) -> list[int]:
        x = check_vector(x, self.n_features)
        return [int(t.leaf_for(x).value) for t in self.trees]

    def predict_one(self, x) -> tuple[int, float]:
        votes = self.tree_votes(x)
        return majority_vote(votes), sum(votes) / len(votes)

    def hyperparams(self) -> dict:
        return {"n_trees": self.n_trees, "features_per_split": self.features_per_split,
                "max_depth": self.max_depth, "min_instances": self.min_instances,
                "bootstrap": self.bootstrap, "seed": self.seed}

    def params(self) -> dict:
        return {"n_features": self.n_features, "trees": [tree_to_list(t) for t in self.trees]}

    @classmethod
    def from_params(cls, hyperparams: dict, params: dict) -> "RandomForestModel":
        return cls([tree_from_list(t) for t in params["trees"]], params["n_features"], **hyperparams)


def train_forest(X, y, n_trees: int = 100, features_per_split: int | None = None,
                 max_depth: int | None = 5, min_instances: int = 1, bootstrap: bool = True,
                 seed: int = 0) -> RandomForestModel:
    if n_trees < 1:
        raise ModelError("n_trees must be >= 1")
    X, y = as_training_data(X, y, require_both=False)
    n, dim = X.shape
    k = features_per_split if features_per_split is not None else math.ceil(math.sqrt(dim))
    trees = []
    for t in range(n_trees):
        # per-tree stream so trees could be fitted in any order
        rng = np.random.default_rng([seed, t])
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(build_tree(X[idx], y[idx], max_depth=max_depth,
                                min_instances=min_instances, features_per_split=k, rng=rng))
    return RandomForestModel(trees, dim, n_trees, k, max_depth, min_instances, bootstrap, seed)


def _sigmoid_array(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _mean_log_loss(F: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, F) - y * F))


@dataclass
class GBTModel(Classifier):
    trees: list[TreeNode]
    n_features: int
    init_score: float
    learning_rate: float = 0.1
    n_iterations: int = 50
    max_depth: int = 3
    min_instances: int = 1
    history: list[float] = field(default_factory=list, repr=False, compare=False)

    model_type = "gbt"

    def raw_score(self, x) -> float:
        x = check_vector(x, self.n_features)
        total = 0.0
        for t in self.trees:
            total += t.leaf_for(x).value
        return self.init_score + self.learning_rate * total

    def predict_one(self, x) -> tuple[int, float]:
        F = self.raw_score(x)
        p = 0.5 * (1.0 + math.tanh(0.5 * F))
        return (1 if p >= 0.5 else 0), p

    def hyperparams(self) -> dict:
        return {"n_iterations": self.n_iterations, "learning_rate": self.learning_rate,
                "max_depth": self.max_depth, "min_instances": self.min_instances}

    def params(self) -> dict:
        return {"n_features": self.n_features, "init_score": self.init_score,
                "trees": [tree_to_list(t) for t in self.trees]}

    @classmethod
    def from_params(cls, hyperparams: dict, params: dict) -> "GBTModel":
        return cls([tree_from_list(t) for t in params["trees"]], params["n_features"],
                   params["init_score"], **hyperparams)


def train_gbt(X, y, n_iterations: int = 50, learning_rate: float = 0.1, max_depth: int = 3,
              min_instances: int = 1) -> GBTModel:
    """Logistic-loss boosting with one Newton step per leaf."""
    X, y = as_training_data(X, y)
    yf = y.astype(np.float64)
    n1 = float(yf.sum())
    init = math.log(n1 / (len(yf) - n1))
    F = np.full(len(yf), init)
    history = [_mean_log_loss(F, yf)]
    trees = []
    for _ in range(n_iterations):
        p = _sigmoid_array(F)
        residual = yf - p
        root = build_tree(X, residual, task="regression", max_depth=max_depth,
                          min_instances=min_instances)
        # replace leaf means with Newton steps: sum(r) / sum(p(1-p))
        leaf_of = [root.leaf_for(x) for x in X]
        num: dict[int, float] = {}
        den: dict[int, float] = {}
        for i, lf in enumerate(leaf_of):
            key = id(lf)
            num[key] = num.get(key, 0.0) + residual[i]
            den[key] = den.get(key, 0.0) + p[i] * (1.0 - p[i])
        for lf in root.leaves():
            d = den.get(id(lf), 0.0)
            lf.value = num.get(id(lf), 0.0) / d if d > 1e-12 else 0.0
        F = F + learning_rate * np.array([lf.value for lf in leaf_of])
        trees.append(root)
        history.append(_mean_log_loss(F, yf))
    return GBTModel(trees, X.shape[1], init, learning_rate, n_iterations, max_depth,
                    min_instances, history)
