"""CART trees stored as flat node arrays.

Node ``i`` is a leaf when ``feature[i] == -1``. Internal nodes send a sample
left when ``x[feature] <= threshold``. ``cover`` holds the number of training
samples (bootstrap duplicates included) that reached the node and ``value``
holds one score vector per node; only leaf values are used for prediction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..errors import InvalidArgument

LEAF = -1


class TreeNode(NamedTuple):
    index: int
    kind: str
    feature_index: int
    threshold: float
    left: int
    right: int
    cover: float
    value: np.ndarray


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    cover: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_outputs(self) -> int:
        return self.value.shape[1]

    def is_leaf(self, i: int) -> bool:
        return self.feature[i] == LEAF

    def node(self, i: int) -> TreeNode:
        kind = "leaf" if self.is_leaf(i) else "internal"
        return TreeNode(i, kind, int(self.feature[i]), float(self.threshold[i]),
                        int(self.left[i]), int(self.right[i]), float(self.cover[i]), self.value[i])

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature == LEAF)

    def max_depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if not self.is_leaf(i):
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def used_features(self) -> set[int]:
        return {int(f) for f in self.feature if f != LEAF}

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        X = np.atleast_2d(X)
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


def _gini_split(xs: np.ndarray, onehot: np.ndarray, min_leaf: int):
    """Best Gini split along one pre-sorted feature: (gain, position) or None."""
    n = len(xs)
    total = onehot.sum(axis=0)
    left_counts = np.cumsum(onehot, axis=0)[:-1]
    right_counts = total - left_counts
    n_left = np.arange(1, n, dtype=float)
    n_right = n - n_left
    valid = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    if not valid.any():
        return None
    # weighted child impurity: n_l * (1 - sum p_l^2) + n_r * (1 - sum p_r^2)
    child = (n_left - (left_counts ** 2).sum(axis=1) / n_left) + (n_right - (right_counts ** 2).sum(axis=1) / n_right)
    parent = n - (total ** 2).sum() / n
    gain = (parent - child) / n
    gain[~valid] = -np.inf
    pos = int(np.argmax(gain))
    return float(gain[pos]), pos


def _mse_split(xs: np.ndarray, target: np.ndarray, min_leaf: int):
    """Best squared-error split along one pre-sorted feature."""
    n = len(xs)
    total = target.sum()
    left_sum = np.cumsum(target)[:-1]
    n_left = np.arange(1, n, dtype=float)
    n_right = n - n_left
    valid = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    if not valid.any():
        return None
    score = left_sum ** 2 / n_left + (total - left_sum) ** 2 / n_right
    gain = (score - total ** 2 / n) / n
    gain[~valid] = -np.inf
    pos = int(np.argmax(gain))
    return float(gain[pos]), pos


_GAIN_EPS = 1e-12


def build_tree(
    X: np.ndarray,
    target: np.ndarray,
    criterion: str,
    leaf_value,
    max_depth: int,
    min_samples_leaf: int = 1,
    features_per_split: int | None = None,
    rng: np.random.Generator | None = None,
) -> Tree:
    """Greedy depth-first tree growth.

    ``target`` is a one-hot class matrix for ``"gini"`` and a 1-D float array
    for ``"mse"``. ``leaf_value(rows)`` maps the sample indices at a node to its
    stored value vector.
    """
    n, m = X.shape
    if features_per_split is None or features_per_split >= m:
        features_per_split = m
    features: list[int] = []
    thresholds: list[float] = []
    lefts: list[int] = []
    rights: list[int] = []
    covers: list[float] = []
    values: list[np.ndarray] = []

    def new_node(rows: np.ndarray) -> int:
        features.append(LEAF)
        thresholds.append(0.0)
        lefts.append(LEAF)
        rights.append(LEAF)
        covers.append(float(len(rows)))
        values.append(np.asarray(leaf_value(rows), dtype=float))
        return len(features) - 1

    root = new_node(np.arange(n))
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, rows, depth = stack.pop()
        if depth >= max_depth or len(rows) < 2 * min_samples_leaf:
            continue
        if criterion == "gini" and (target[rows].sum(axis=0) == len(rows)).any():
            continue
        if features_per_split < m:
            candidates = np.sort(rng.choice(m, features_per_split, replace=False))
        else:
            candidates = np.arange(m)
        best = None
        for f in candidates:
            col = X[rows, f]
            order = np.argsort(col, kind="stable")
            xs = col[order]
            if criterion == "gini":
                found = _gini_split(xs, target[rows][order], min_samples_leaf)
            else:
                found = _mse_split(xs, target[rows][order], min_samples_leaf)
            if found is None:
                continue
            gain, pos = found
            # strict comparison keeps the lower feature index on ties
            if best is None or gain > best[0]:
                best = (gain, int(f), 0.5 * (xs[pos] + xs[pos + 1]))
        if best is None or best[0] <= _GAIN_EPS:
            continue
        _, f, thr = best
        # midpoints of adjacent floats can round onto the upper value
        go_left = X[rows, f] <= thr
        if go_left.all() or not go_left.any():
            continue
        left_rows, right_rows = rows[go_left], rows[~go_left]
        features[node] = f
        thresholds[node] = float(thr)
        left = new_node(left_rows)
        right = new_node(right_rows)
        lefts[node], rights[node] = left, right
        stack.append((right, right_rows, depth + 1))
        stack.append((left, left_rows, depth + 1))

    return Tree(
        feature=np.array(features, dtype=np.int64),
        threshold=np.array(thresholds, dtype=float),
        left=np.array(lefts, dtype=np.int64),
        right=np.array(rights, dtype=np.int64),
        cover=np.array(covers, dtype=float),
        value=np.vstack(values),
    )


def _check_xy(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) == 0:
        raise InvalidArgument("X must be a non-empty 2-D matrix")
    if len(X) != len(y):
        raise InvalidArgument("X and y differ in length")
    if not np.all(np.isfinite(X)):
        raise InvalidArgument("X contains non-finite values")
    return X, y


def fit_tree(
    X,
    y,
    max_depth: int = 12,
    min_samples_leaf: int = 1,
    features_per_split: int | None = None,
    seed: int = 0,
    n_classes: int | None = None,
    sample_index: np.ndarray | None = None,
) -> Tree:
    """Gini CART classifier; leaves store class-frequency probability vectors.

    ``sample_index`` selects (possibly repeated) training rows, as used by
    bootstrap aggregation.
    """
    X, y = _check_xy(X, y)
    y = y.astype(np.int64)
    if (y < 0).any():
        raise InvalidArgument("labels must be non-negative integers")
    if max_depth < 0 or min_samples_leaf < 1:
        raise InvalidArgument("invalid tree hyperparameters")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    if sample_index is not None:
        X, y = X[sample_index], y[sample_index]
    onehot = np.eye(n_classes)[y]
    rng = np.random.default_rng(seed)
    return build_tree(
        X,
        onehot,
        "gini",
        lambda rows: onehot[rows].mean(axis=0),
        max_depth,
        min_samples_leaf,
        features_per_split,
        rng,
    )
