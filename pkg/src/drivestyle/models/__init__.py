"""From-scratch classifiers: CART, random forest, boosted trees, linear SVM."""

import numpy as np

from ..errors import InvalidArgument
from .ensemble import TreeEnsemble, fit_forest, fit_gbt, log_loss, softmax
from .io import load_model, serialize_model
from .linear import LinearModel, fit_linear_svm
from .tree import Tree, TreeNode, fit_tree


def predict_proba(model, x) -> np.ndarray:
    """Class distribution for one feature vector (1-D) or a matrix of them."""
    values = getattr(x, "values", x)
    arr = np.asarray(values, dtype=float)
    single = arr.ndim == 1
    if arr.ndim not in (1, 2):
        raise InvalidArgument("x must be a vector or a matrix")
    proba = model.predict_proba(np.atleast_2d(arr))
    return proba[0] if single else proba


__all__ = [
    "LinearModel",
    "Tree",
    "TreeEnsemble",
    "TreeNode",
    "fit_forest",
    "fit_gbt",
    "fit_linear_svm",
    "fit_tree",
    "load_model",
    "log_loss",
    "predict_proba",
    "serialize_model",
    "softmax",
]
