"""One-vs-rest linear SVM trained with Pegasos."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgument
from .ensemble import softmax
from .tree import _check_xy


@dataclass
class LinearModel:
    weights: np.ndarray  # (n_classes, n_features)
    bias: np.ndarray  # (n_classes,)
    mean: np.ndarray
    scale: np.ndarray
    feature_names: list[str] | None = None
    params: dict = field(default_factory=dict)
    # margins are not calibrated probabilities
    calibrated: bool = False

    @property
    def n_classes(self) -> int:
        return len(self.bias)

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    def standardize(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise InvalidArgument(f"expected {self.n_features} features, got {X.shape[1]}")
        return (X - self.mean) / self.scale

    def decision_function(self, X) -> np.ndarray:
        return self.standardize(X) @ self.weights.T + self.bias

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)


def fit_linear_svm(
    X,
    y,
    lam: float = 1e-4,
    epochs: int = 50,
    seed: int = 0,
    n_classes: int | None = None,
    feature_names: list[str] | None = None,
) -> LinearModel:
    X, y = _check_xy(X, y)
    y = y.astype(np.int64)
    if lam <= 0 or epochs <= 0:
        raise InvalidArgument("lam and epochs must be positive")
    if len(np.unique(y)) < 2:
        raise InvalidArgument("need at least two classes")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    n, m = X.shape

    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    # zero-variance features standardize to 0 and so never contribute
    scale[scale == 0] = 1.0
    Z = np.hstack([(X - mean) / scale, np.ones((n, 1))])
    signs = np.where(np.eye(n_classes)[y] > 0, 1.0, -1.0)  # (n, n_classes)

    W = np.zeros((n_classes, m + 1))
    radius = 1.0 / np.sqrt(lam)
    rng = np.random.default_rng(seed)
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            z = Z[i]
            violated = signs[i] * (W @ z) < 1.0
            W *= 1.0 - eta * lam
            W[violated] += eta * signs[i, violated, None] * z
            norms = np.linalg.norm(W, axis=1)
            shrink = np.minimum(1.0, radius / np.maximum(norms, 1e-300))
            W *= shrink[:, None]
    params = {"model": "svm", "lambda": lam, "epochs": epochs, "seed": seed}
    return LinearModel(W[:, :m].copy(), W[:, m].copy(), mean, scale, feature_names, params)
