"""Random forests and softmax gradient-boosted trees."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgument
from .tree import Tree, _check_xy, build_tree, fit_tree


def softmax(margins: np.ndarray) -> np.ndarray:
    z = margins - margins.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class TreeEnsemble:
    """Trees plus the rule that combines their leaf vectors.

    ``forest``: average of per-tree class probabilities.
    ``boosted``: ``base_score`` plus the sum of tree margins, then softmax.
    """

    trees: list[Tree]
    kind: str
    n_classes: int
    n_features: int
    base_score: np.ndarray | None = None
    feature_names: list[str] | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("forest", "boosted"):
            raise InvalidArgument(f"unknown ensemble kind {self.kind!r}")
        if self.base_score is None:
            self.base_score = np.zeros(self.n_classes)
        self.base_score = np.asarray(self.base_score, dtype=float)

    @property
    def combiner(self) -> str:
        return "average" if self.kind == "forest" else "sum-then-softmax"

    @property
    def tree_weight(self) -> float:
        """Factor applied to each tree's output when combining."""
        return 1.0 / len(self.trees) if self.kind == "forest" else 1.0

    @property
    def offset(self) -> np.ndarray:
        """Constant added after combining trees."""
        return np.zeros(self.n_classes) if self.kind == "forest" else self.base_score

    def _check(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise InvalidArgument(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def predict_raw(self, X) -> np.ndarray:
        """Explained output: averaged probabilities (forest) or margins (boosted)."""
        X = self._check(X)
        out = np.zeros((len(X), self.n_classes))
        for tree in self.trees:
            out += tree.predict(X)
        return self.offset + self.tree_weight * out

    def predict_proba(self, X) -> np.ndarray:
        raw = self.predict_raw(X)
        return raw if self.kind == "forest" else softmax(raw)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


def _n_classes(y: np.ndarray, n_classes: int | None) -> int:
    if n_classes is None:
        n_classes = int(y.max()) + 1
    if (y < 0).any() or (y >= n_classes).any():
        raise InvalidArgument("labels out of range")
    return n_classes


def fit_forest(
    X,
    y,
    n_trees: int = 100,
    max_depth: int = 12,
    min_samples_leaf: int = 1,
    features_per_split: int | None = None,
    bootstrap: bool = True,
    seed: int = 0,
    n_classes: int | None = None,
    feature_names: list[str] | None = None,
) -> TreeEnsemble:
    X, y = _check_xy(X, y)
    y = y.astype(np.int64)
    if n_trees <= 0:
        raise InvalidArgument("n_trees must be positive")
    n_classes = _n_classes(y, n_classes)
    n, m = X.shape
    if features_per_split is None:
        features_per_split = math.ceil(math.sqrt(m))
    seeds = np.random.SeedSequence(seed).spawn(n_trees)
    trees = []
    for ss in seeds:
        rng = np.random.default_rng(ss)
        sample = rng.integers(0, n, size=n) if bootstrap else None
        tree_seed = int(rng.integers(0, 2**31 - 1))
        trees.append(fit_tree(X, y, max_depth, min_samples_leaf, features_per_split,
                              seed=tree_seed, n_classes=n_classes, sample_index=sample))
    params = {
        "model": "rf",
        "n_trees": n_trees,
        "max_depth": max_depth,
        "min_samples_leaf": min_samples_leaf,
        "features_per_split": features_per_split,
        "bootstrap": bootstrap,
        "seed": seed,
    }
    return TreeEnsemble(trees, "forest", n_classes, m, feature_names=feature_names, params=params)


def log_loss(y: np.ndarray, proba: np.ndarray) -> float:
    p = np.clip(proba[np.arange(len(y)), y], 1e-300, None)
    return float(-np.mean(np.log(p)))


def fit_gbt(
    X,
    y,
    n_rounds: int = 100,
    max_depth: int = 4,
    learning_rate: float = 0.1,
    min_samples_leaf: int = 1,
    seed: int = 0,
    n_classes: int | None = None,
    feature_names: list[str] | None = None,
    loss_curve: list | None = None,
) -> TreeEnsemble:
    """Softmax gradient boosting with squared-error regression trees.

    Each round fits one tree per class to the negative gradient
    ``onehot - softmax(margins)``; leaves hold the shrunken mean residual.
    ``loss_curve`` (if given) receives the training log-loss before the first
    round and after every round.
    """
    X, y = _check_xy(X, y)
    y = y.astype(np.int64)
    if n_rounds <= 0 or max_depth < 0 or not 0 < learning_rate <= 1 or min_samples_leaf < 1:
        raise InvalidArgument("invalid boosting hyperparameters")
    n_classes = _n_classes(y, n_classes)
    n, m = X.shape
    counts = np.bincount(y, minlength=n_classes).astype(float)
    # an absent class gets a tiny prior instead of log(0)
    priors = np.maximum(counts, 0.5) / max(counts.sum(), 1.0)
    base = np.log(priors)
    onehot = np.eye(n_classes)[y]
    margins = np.tile(base, (n, 1))
    rng = np.random.default_rng(seed)
    if loss_curve is not None:
        loss_curve.append(log_loss(y, softmax(margins)))
    trees: list[Tree] = []
    for _ in range(n_rounds):
        residual = onehot - softmax(margins)
        for k in range(n_classes):
            r = residual[:, k]

            def leaf_value(rows, r=r, k=k):
                v = np.zeros(n_classes)
                v[k] = learning_rate * r[rows].mean()
                return v

            tree = build_tree(X, r, "mse", leaf_value, max_depth, min_samples_leaf, None, rng)
            trees.append(tree)
            margins += tree.predict(X)
        if loss_curve is not None:
            loss_curve.append(log_loss(y, softmax(margins)))
    params = {
        "model": "gbt",
        "n_rounds": n_rounds,
        "max_depth": max_depth,
        "learning_rate": learning_rate,
        "min_samples_leaf": min_samples_leaf,
        "seed": seed,
    }
    return TreeEnsemble(trees, "boosted", n_classes, m, base_score=base, feature_names=feature_names, params=params)
