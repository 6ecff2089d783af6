"""Versioned JSON model files."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import SchemaError
from .ensemble import TreeEnsemble
from .linear import LinearModel
from .tree import Tree

FORMAT = "drivestyle-model"
VERSION = 1


def _tree_to_dict(tree: Tree) -> dict:
    return {
        "feature_index": tree.feature.tolist(),
        "threshold": tree.threshold.tolist(),
        "children_left": tree.left.tolist(),
        "children_right": tree.right.tolist(),
        "cover": tree.cover.tolist(),
        "values": tree.value.tolist(),
    }


def _tree_from_dict(d: dict) -> Tree:
    tree = Tree(
        feature=np.array(d["feature_index"], dtype=np.int64),
        threshold=np.array(d["threshold"], dtype=float),
        left=np.array(d["children_left"], dtype=np.int64),
        right=np.array(d["children_right"], dtype=np.int64),
        cover=np.array(d["cover"], dtype=float),
        value=np.array(d["values"], dtype=float),
    )
    n = tree.n_nodes
    if n == 0 or tree.value.ndim != 2 or tree.value.shape[0] != n:
        raise SchemaError("malformed tree arrays")
    if not all(len(a) == n for a in (tree.threshold, tree.left, tree.right, tree.cover)):
        raise SchemaError("tree arrays differ in length")
    internal = tree.feature >= 0
    for child in (tree.left[internal], tree.right[internal]):
        if ((child <= 0) | (child >= n)).any():
            raise SchemaError("child index out of range")
    return tree


def model_to_dict(model) -> dict:
    if isinstance(model, TreeEnsemble):
        body = {
            "type": "tree_ensemble",
            "kind": model.kind,
            "n_classes": model.n_classes,
            "n_features": model.n_features,
            "base_score": model.base_score.tolist(),
            "trees": [_tree_to_dict(t) for t in model.trees],
        }
    elif isinstance(model, LinearModel):
        body = {
            "type": "linear",
            "weights": model.weights.tolist(),
            "bias": model.bias.tolist(),
            "mean": model.mean.tolist(),
            "scale": model.scale.tolist(),
        }
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return {"format": FORMAT, "version": VERSION, **body,
            "feature_names": model.feature_names, "params": model.params}


def model_from_dict(d: dict):
    if not isinstance(d, dict) or d.get("format") != FORMAT:
        raise SchemaError("not a drivestyle model file")
    if d.get("version") != VERSION:
        raise SchemaError(f"unsupported model version {d.get('version')!r} (expected {VERSION})")
    try:
        if d["type"] == "tree_ensemble":
            trees = [_tree_from_dict(t) for t in d["trees"]]
            if not trees:
                raise SchemaError("ensemble has no trees")
            model = TreeEnsemble(trees, d["kind"], int(d["n_classes"]), int(d["n_features"]),
                                 base_score=np.array(d["base_score"], dtype=float),
                                 feature_names=d.get("feature_names"), params=d.get("params") or {})
            for tree in trees:
                if tree.n_outputs != model.n_classes or (tree.feature >= model.n_features).any():
                    raise SchemaError("tree does not match ensemble dimensions")
            return model
        if d["type"] == "linear":
            return LinearModel(np.array(d["weights"], dtype=float), np.array(d["bias"], dtype=float),
                               np.array(d["mean"], dtype=float), np.array(d["scale"], dtype=float),
                               d.get("feature_names"), d.get("params") or {})
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"malformed model file: {exc}") from exc
    raise SchemaError(f"unknown model type {d.get('type')!r}")


def serialize_model(model, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model)))
    return path


def load_model(path: str | Path):
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: unreadable model file ({exc})") from exc
    return model_from_dict(data)
