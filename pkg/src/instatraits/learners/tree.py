"""Gini decision trees and random forests."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..errors import ConfigurationError
from . import _kernels
from .validation import check_features, check_training_data


_MASK = (1 << 64) - 1


def _splitmix(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_key(*parts: int) -> np.uint64:
    key = 0x5EED
    for p in parts:
        key = _splitmix(key ^ _splitmix(int(p) & _MASK))
    return np.uint64(key)


@dataclass
class Tree:
    """Flat node arrays; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    depth: np.ndarray
    counts: np.ndarray

    @property
    def node_count(self) -> int:
        return int(self.feature.shape[0])

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def apply(self, X, max_depth=None) -> np.ndarray:
        limit = np.iinfo(np.int64).max if max_depth is None else int(max_depth)
        return _kernels.apply_tree(X, self.feature, self.threshold, self.left, self.right, self.depth, limit)

    def proba(self, X, max_depth=None) -> np.ndarray:
        c = self.counts[self.apply(X, max_depth)]
        return c / c.sum(axis=1, keepdims=True)

    def to_nested(self, node: int = 0, max_depth=None) -> dict:
        counts = [float(v) for v in self.counts[node]]
        if self.feature[node] < 0 or (max_depth is not None and self.depth[node] >= max_depth):
            return {"counts": counts}
        return {
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "counts": counts,
            "left": self.to_nested(int(self.left[node]), max_depth),
            "right": self.to_nested(int(self.right[node]), max_depth),
        }

    @classmethod
    def from_nested(cls, record: dict) -> "Tree":
        feature, threshold, left, right, depth, counts = [], [], [], [], [], []

        def visit(rec, d):
            i = len(feature)
            feature.append(rec.get("feature", -1))
            threshold.append(rec.get("threshold", 0.0))
            left.append(-1)
            right.append(-1)
            depth.append(d)
            counts.append(rec["counts"])
            if "left" in rec:
                left[i] = visit(rec["left"], d + 1)
                right[i] = visit(rec["right"], d + 1)
            return i

        visit(record, 0)
        return cls(
            np.array(feature, dtype=np.int64),
            np.array(threshold, dtype=float),
            np.array(left, dtype=np.int64),
            np.array(right, dtype=np.int64),
            np.array(depth, dtype=np.int64),
            np.array(counts, dtype=float),
        )


def _grow(X, y_enc, sample_idx, n_classes, max_depth, min_leaf, max_features, key) -> Tree:
    arrays = _kernels.grow_tree(X, y_enc, sample_idx, n_classes, max_depth, min_leaf, max_features, key)
    return Tree(*arrays)


def _resolve_max_features(max_features, n_features: int) -> int:
    if max_features is None:
        return n_features
    if max_features == "sqrt":
        return max(1, int(math.sqrt(n_features)))
    if max_features == "log2":
        return max(1, int(math.log2(n_features)))
    if isinstance(max_features, float):
        return max(1, int(max_features * n_features))
    return max(1, min(int(max_features), n_features))


def _check_depth_leaf(max_depth, min_samples_leaf):
    if max_depth is None or int(max_depth) < 1:
        raise ConfigurationError(f"max_depth must be a positive integer, got {max_depth!r}")
    if int(min_samples_leaf) < 1:
        raise ConfigurationError("min_samples_leaf must be at least 1")


class DecisionTreeClassifier(ClassifierMixin, BaseEstimator):
    """CART classifier with Gini impurity; considers every feature at each split."""

    def __init__(self, max_depth=10, min_samples_leaf=2, max_features=None, random_state=0):
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.random_state = random_state

    def fit(self, X, y):
        _check_depth_leaf(self.max_depth, self.min_samples_leaf)
        X, y = check_training_data(self, X, y)
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        k = _resolve_max_features(self.max_features, X.shape[1])
        self.tree_ = _grow(X, y_enc.astype(np.int64), np.arange(X.shape[0], dtype=np.int64),
                           len(self.classes_), int(self.max_depth), int(self.min_samples_leaf), k,
                           derive_key(self.random_state or 0))
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "tree_")
        X = check_features(self, X)
        return self.tree_.proba(X)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def get_state(self) -> dict:
        return {"classes": self.classes_.tolist(), "n_features": self.n_features_in_, "tree": self.tree_.to_nested()}

    def set_state(self, state: dict):
        self.classes_ = np.array(state["classes"])
        self.n_features_in_ = state["n_features"]
        self.tree_ = Tree.from_nested(state["tree"])
        return self


class RandomForestClassifier(ClassifierMixin, BaseEstimator):
    """Bagged Gini trees with per-split feature subsampling.

    ``predict_proba`` returns vote fractions. Tree ``t`` only depends on
    ``(random_state, t)``, so the first ``k`` trees of a larger forest form the
    ``k``-tree forest, and :meth:`truncate` cuts depth exactly.
    """

    def __init__(self, n_estimators=100, max_depth=8, min_samples_leaf=1, max_features="sqrt",
                 bootstrap=True, random_state=0):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.random_state = random_state

    def fit(self, X, y):
        if int(self.n_estimators) < 1:
            raise ConfigurationError("n_estimators must be at least 1")
        _check_depth_leaf(self.max_depth, self.min_samples_leaf)
        X, y = check_training_data(self, X, y)
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        y_enc = y_enc.astype(np.int64)
        n = X.shape[0]
        k = _resolve_max_features(self.max_features, X.shape[1])
        seed = self.random_state or 0
        trees = []
        for t in range(int(self.n_estimators)):
            key = derive_key(seed, t)
            if self.bootstrap:
                sample = _kernels.bootstrap_indices(n, derive_key(seed, t, 1))
            else:
                sample = np.arange(n, dtype=np.int64)
            trees.append(_grow(X, y_enc, sample, len(self.classes_), int(self.max_depth),
                               int(self.min_samples_leaf), k, key))
        self.estimators_ = trees
        self.depth_limit_ = int(self.max_depth)
        return self

    def _votes(self, X, n_estimators=None, max_depth=None):
        check_is_fitted(self, "estimators_")
        X = check_features(self, X)
        trees = self.estimators_[: n_estimators or len(self.estimators_)]
        depth = self.depth_limit_ if max_depth is None else min(max_depth, self.depth_limit_)
        votes = np.zeros((X.shape[0], len(self.classes_)))
        rows = np.arange(X.shape[0])
        for tree in trees:
            votes[rows, np.argmax(tree.counts[tree.apply(X, depth)], axis=1)] += 1.0
        return votes / len(trees)

    def predict_proba(self, X, n_estimators=None, max_depth=None):
        return self._votes(X, n_estimators, max_depth)

    def predict(self, X, n_estimators=None, max_depth=None):
        return self.classes_[np.argmax(self._votes(X, n_estimators, max_depth), axis=1)]

    def truncate(self, n_estimators: int, max_depth: int) -> "RandomForestClassifier":
        """Forest equal to refitting with fewer trees / shallower depth."""
        check_is_fitted(self, "estimators_")
        if n_estimators > len(self.estimators_) or max_depth > self.depth_limit_:
            raise ConfigurationError("can only truncate to a smaller forest")
        clone = RandomForestClassifier(n_estimators, max_depth, self.min_samples_leaf, self.max_features,
                                       self.bootstrap, self.random_state)
        clone.classes_ = self.classes_
        clone.n_features_in_ = self.n_features_in_
        clone.estimators_ = [Tree.from_nested(t.to_nested(max_depth=max_depth)) for t in self.estimators_[:n_estimators]]
        clone.depth_limit_ = max_depth
        return clone

    def get_state(self) -> dict:
        return {
            "classes": self.classes_.tolist(),
            "n_features": self.n_features_in_,
            "trees": [t.to_nested(max_depth=self.depth_limit_) for t in self.estimators_],
        }

    def set_state(self, state: dict):
        self.classes_ = np.array(state["classes"])
        self.n_features_in_ = state["n_features"]
        self.estimators_ = [Tree.from_nested(t) for t in state["trees"]]
        self.depth_limit_ = int(self.max_depth)
        return self


def kfold_indices(n: int, n_folds: int, seed: int):
    """Seeded shuffled k-fold as a list of (train, validation) index arrays."""
    order = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(order, n_folds)
    return [(np.sort(np.concatenate(folds[:i] + folds[i + 1:])), np.sort(folds[i])) for i in range(n_folds)]


class RandomForestCV(ClassifierMixin, BaseEstimator):
    """Random forest with (n_estimators, max_depth) chosen by k-fold CV accuracy.

    Each fold grows one forest at the largest grid point and scores every
    smaller configuration by truncation. Ties prefer fewer trees, then
    shallower trees.
    """

    def __init__(self, n_estimators_grid=(50, 100, 200), max_depth_grid=(4, 8, 16), cv=3,
                 min_samples_leaf=1, max_features="sqrt", random_state=0):
        self.n_estimators_grid = n_estimators_grid
        self.max_depth_grid = max_depth_grid
        self.cv = cv
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.random_state = random_state

    def _grid(self):
        trees = sorted(set(int(t) for t in self.n_estimators_grid))
        depths = sorted(set(int(d) for d in self.max_depth_grid))
        if not trees or not depths:
            raise ConfigurationError("random forest grid is empty")
        if trees[0] < 1:
            raise ConfigurationError(f"number of trees must be positive, got {trees[0]}")
        if depths[0] < 1:
            raise ConfigurationError(f"max depth must be positive, got {depths[0]}")
        return trees, depths

    def fit(self, X, y):
        trees, depths = self._grid()
        X, y = check_training_data(self, X, y)
        seed = self.random_state or 0
        configs = list(itertools.product(trees, depths))
        scores = {c: [] for c in configs}
        n_folds = min(int(self.cv), X.shape[0])
        for fold, (tr, va) in enumerate(kfold_indices(X.shape[0], n_folds, seed)):
            forest = RandomForestClassifier(trees[-1], depths[-1], self.min_samples_leaf, self.max_features,
                                            True, int(derive_key(seed, fold, 7)) >> 1)
            forest.fit(X[tr], y[tr])
            for n_t, d in configs:
                scores[(n_t, d)].append(float(np.mean(forest.predict(X[va], n_t, d) == y[va])))
        self.cv_results_ = [
            {"n_estimators": n_t, "max_depth": d, "fold_accuracy": scores[(n_t, d)],
             "mean_accuracy": float(np.mean(scores[(n_t, d)]))}
            for n_t, d in configs
        ]
        best = max(self.cv_results_, key=lambda r: (r["mean_accuracy"], -r["n_estimators"], -r["max_depth"]))
        self.best_params_ = {"n_estimators": best["n_estimators"], "max_depth": best["max_depth"]}
        self.best_score_ = best["mean_accuracy"]
        full = RandomForestClassifier(trees[-1], depths[-1], self.min_samples_leaf, self.max_features, True, seed)
        full.fit(X, y)
        self.forest_ = full.truncate(best["n_estimators"], best["max_depth"])
        self.classes_ = self.forest_.classes_
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "forest_")
        return self.forest_.predict_proba(X)

    def predict(self, X):
        check_is_fitted(self, "forest_")
        return self.forest_.predict(X)

    def get_state(self) -> dict:
        return {
            "best_params": self.best_params_,
            "best_score": self.best_score_,
            "cv_results": self.cv_results_,
            "forest_params": self.forest_.get_params(),
            "forest": self.forest_.get_state(),
        }

    def set_state(self, state: dict):
        self.best_params_ = state["best_params"]
        self.best_score_ = state["best_score"]
        self.cv_results_ = state["cv_results"]
        self.forest_ = RandomForestClassifier(**state["forest_params"]).set_state(state["forest"])
        self.classes_ = self.forest_.classes_
        self.n_features_in_ = self.forest_.n_features_in_
        return self
