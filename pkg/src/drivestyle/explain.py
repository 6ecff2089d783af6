"""Exact SHAP attributions for tree ensembles.

Two independent routes compute the same numbers:

* ``brute_force_shap`` enumerates every feature subset and weights the
  marginal contributions with the Shapley kernel ``|S|!(M-|S|-1)!/M!``.
* ``tree_shap`` runs the polynomial path-dependent Tree SHAP recursion
  (extend / unwind over the unique features on each root-to-leaf path),
  vectorized across instances.

Both use the cover-weighted conditional expectation: at a split on a known
feature follow the instance's branch, otherwise average both children by
their training cover. Forests are explained in probability space, boosted
ensembles in margin space (before the softmax), so attributions always add
up to the explained output.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FeasibilityError, InvalidArgument, NumericError
from .models.ensemble import TreeEnsemble
from .models.tree import Tree

MAX_BRUTE_FORCE_FEATURES = 12


@dataclass
class Explanation:
    """Attributions for one instance, all classes at once.

    ``phi`` has shape (n_features, n_classes); ``base_value`` and ``fx`` have
    shape (n_classes,).
    """

    base_value: np.ndarray
    phi: np.ndarray
    fx: np.ndarray
    feature_names: list[str]
    feature_values: np.ndarray
    instance_ref: object = None
    class_index: int | None = None
    output: str = "probability"

    def class_phi(self, k: int | None = None) -> np.ndarray:
        k = self.class_index if k is None else k
        if k is None:
            raise InvalidArgument("no class selected")
        return self.phi[:, k]

    def to_dict(self) -> dict:
        return {
            "instance_ref": self.instance_ref,
            "output": self.output,
            "feature_names": list(self.feature_names),
            "feature_values": self.feature_values.tolist(),
            "base_value": self.base_value.tolist(),
            "fx": self.fx.tolist(),
            "phi": self.phi.tolist(),
        }


def _output_kind(ensemble: TreeEnsemble) -> str:
    return "probability" if ensemble.kind == "forest" else "margin"


def _names(ensemble: TreeEnsemble) -> list[str]:
    if ensemble.feature_names:
        return list(ensemble.feature_names)
    return [f"f{i}" for i in range(ensemble.n_features)]


def conditional_expectation(tree: Tree, x, S) -> np.ndarray:
    """Cover-weighted expectation of ``tree`` given only the features in ``S``."""
    x = np.asarray(x, dtype=float)
    known = set(int(i) for i in S)

    def walk(j: int) -> np.ndarray:
        if tree.is_leaf(j):
            return tree.value[j]
        f = int(tree.feature[j])
        left, right = int(tree.left[j]), int(tree.right[j])
        if f in known:
            return walk(left if x[f] <= tree.threshold[j] else right)
        if tree.cover[j] <= 0:
            raise NumericError(f"node {j} has zero cover")
        return (tree.cover[left] * walk(left) + tree.cover[right] * walk(right)) / tree.cover[j]

    return walk(0)


def ensemble_expectation(ensemble: TreeEnsemble, x, S) -> np.ndarray:
    total = sum(conditional_expectation(t, x, S) for t in ensemble.trees)
    return ensemble.offset + ensemble.tree_weight * total


def expected_value(ensemble: TreeEnsemble) -> np.ndarray:
    """E[f(X)] from the training covers (the empty-coalition expectation)."""
    total = np.zeros(ensemble.n_classes)
    for tree in ensemble.trees:
        leaves = tree.leaves()
        if tree.cover[0] <= 0:
            raise NumericError("root has zero cover")
        total += (tree.cover[leaves, None] * tree.value[leaves]).sum(axis=0) / tree.cover[0]
    return ensemble.offset + ensemble.tree_weight * total


def _check_instance(ensemble: TreeEnsemble, x) -> np.ndarray:
    x = np.asarray(getattr(x, "values", x), dtype=float).ravel()
    if x.shape[0] != ensemble.n_features:
        raise InvalidArgument(f"expected {ensemble.n_features} features, got {x.shape[0]}")
    return x


def brute_force_shap(ensemble: TreeEnsemble, x, class_index: int | None = None, instance_ref=None) -> Explanation:
    x = _check_instance(ensemble, x)
    m = ensemble.n_features
    if m > MAX_BRUTE_FORCE_FEATURES:
        raise FeasibilityError(f"subset enumeration over {m} features is infeasible (limit {MAX_BRUTE_FORCE_FEATURES})")
    value = {}
    for size in range(m + 1):
        for subset in itertools.combinations(range(m), size):
            value[frozenset(subset)] = ensemble_expectation(ensemble, x, subset)
    kernel = [math.factorial(s) * math.factorial(m - s - 1) / math.factorial(m) for s in range(m)]
    phi = np.zeros((m, ensemble.n_classes))
    for i in range(m):
        others = [j for j in range(m) if j != i]
        for size in range(m):
            for subset in itertools.combinations(others, size):
                s = frozenset(subset)
                phi[i] += kernel[size] * (value[s | {i}] - value[s])
    return Explanation(
        base_value=value[frozenset()],
        phi=phi,
        fx=ensemble.predict_raw(x)[0],
        feature_names=_names(ensemble),
        feature_values=x,
        instance_ref=instance_ref,
        class_index=class_index,
        output=_output_kind(ensemble),
    )


# -- path-dependent Tree SHAP -------------------------------------------------
#
# A path holds, per element: the split feature, the fraction of cover that
# flows along the path when the feature is unknown (zero fraction, scalar),
# whether the instance follows the path (one fraction, one 0/1 per instance)
# and the permutation weights (one per instance).


def _extend(feat, zf, of, pw, pz, po, pi):
    depth = len(feat)
    feat = feat + [pi]
    zf = np.append(zf, pz)
    of = np.vstack([of, po[None, :]])
    n = po.shape[0]
    new = np.zeros((depth + 1, n))
    if depth == 0:
        new[0] = 1.0
    else:
        j = np.arange(depth)
        new[:depth] += pz * pw * ((depth - j) / (depth + 1))[:, None]
        new[1:] += po[None, :] * pw * ((j + 1) / (depth + 1))[:, None]
    return feat, zf, of, new


def _unwind(feat, zf, of, pw, k):
    last = len(feat) - 1
    o, z = of[k], zf[k]
    nonzero = o != 0
    safe_o = np.where(nonzero, o, 1.0)
    n = pw[last].copy()
    out = pw[:last].copy()
    for j in range(last - 1, -1, -1):
        hot = n * (last + 1) / ((j + 1) * safe_o)
        cold = pw[j] * (last + 1) / (z * (last - j))
        out[j] = np.where(nonzero, hot, cold)
        n = np.where(nonzero, pw[j] - hot * z * (last - j) / (last + 1), n)
    keep = [i for i in range(last + 1) if i != k]
    return [feat[i] for i in keep], zf[keep], of[keep], out


def _unwound_sums(zf, of, pw):
    """Sum of unwound permutation weights for every path element but the root."""
    last = len(zf) - 1
    o = of[1:]
    z = zf[1:, None]
    nonzero = o != 0
    safe_o = np.where(nonzero, o, 1.0)
    n = np.broadcast_to(pw[last], o.shape).copy()
    total = np.zeros_like(o)
    for j in range(last - 1, -1, -1):
        hot = n * (last + 1) / ((j + 1) * safe_o)
        cold = pw[j][None, :] / z * (last + 1) / (last - j)
        total += np.where(nonzero, hot, cold)
        n = np.where(nonzero, pw[j][None, :] - hot * z * (last - j) / (last + 1), n)
    return total


def _tree_shap_one_tree(tree: Tree, X: np.ndarray, phi: np.ndarray) -> None:
    n = X.shape[0]

    def recurse(node, feat, zf, of, pw, pz, po, pi):
        feat, zf, of, pw = _extend(feat, zf, of, pw, pz, po, pi)
        if tree.is_leaf(node):
            if len(feat) > 1:
                w = _unwound_sums(zf, of, pw) * (of[1:] - zf[1:, None])
                phi[:, feat[1:], :] += w.T[:, :, None] * tree.value[node][None, None, :]
            return
        f = int(tree.feature[node])
        cover = tree.cover[node]
        if cover <= 0:
            raise NumericError(f"node {node} has zero cover")
        left, right = int(tree.left[node]), int(tree.right[node])
        go_left = (X[:, f] <= tree.threshold[node]).astype(float)
        iz, io = 1.0, np.ones(n)
        if f in feat[1:]:
            k = feat.index(f, 1)
            iz, io = zf[k], of[k]
            feat, zf, of, pw = _unwind(feat, zf, of, pw, k)
        recurse(left, feat, zf, of, pw, iz * tree.cover[left] / cover, io * go_left, f)
        recurse(right, feat, zf, of, pw, iz * tree.cover[right] / cover, io * (1.0 - go_left), f)

    recurse(0, [], np.zeros(0), np.zeros((0, n)), np.zeros((0, n)), 1.0, np.ones(n), -1)


def shap_values(ensemble: TreeEnsemble, X) -> tuple[np.ndarray, np.ndarray]:
    """Tree SHAP for every row of ``X``: returns (phi[N, M, C], base_value[C])."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != ensemble.n_features:
        raise InvalidArgument(f"expected {ensemble.n_features} features, got {X.shape[1]}")
    phi = np.zeros((X.shape[0], ensemble.n_features, ensemble.n_classes))
    for tree in ensemble.trees:
        _tree_shap_one_tree(tree, X, phi)
    return phi * ensemble.tree_weight, expected_value(ensemble)


def tree_shap(ensemble: TreeEnsemble, x, class_index: int | None = None, instance_ref=None) -> Explanation:
    x = _check_instance(ensemble, x)
    phi, base = shap_values(ensemble, x[None, :])
    return Explanation(
        base_value=base,
        phi=phi[0],
        fx=ensemble.predict_raw(x)[0],
        feature_names=_names(ensemble),
        feature_values=x,
        instance_ref=instance_ref,
        class_index=class_index,
        output=_output_kind(ensemble),
    )


# -- dataset-level outputs -----------------------------------------------------


@dataclass
class BeeswarmTable:
    """Flattened attributions plus mean |phi| per (class, feature)."""

    instance_ids: list
    feature_names: list[str]
    X: np.ndarray
    phi: np.ndarray  # (N, M, C)
    base_value: np.ndarray
    fx: np.ndarray  # (N, C)
    output: str = "probability"

    @property
    def n_classes(self) -> int:
        return self.phi.shape[2]

    def rows(self):
        """(instance_id, feature_name, feature_value, shap_value, class) tuples."""
        n, m, c = self.phi.shape
        for a in range(n):
            for k in range(c):
                for j in range(m):
                    yield (self.instance_ids[a], self.feature_names[j], float(self.X[a, j]), float(self.phi[a, j, k]), k)

    def __len__(self) -> int:
        return int(np.prod(self.phi.shape))

    def explanation(self, a: int, class_index: int | None = None) -> Explanation:
        return Explanation(self.base_value, self.phi[a], self.fx[a], self.feature_names, self.X[a],
                           self.instance_ids[a], class_index, self.output)

    def global_importance(self) -> np.ndarray:
        """Mean |phi| with shape (n_classes, n_features)."""
        return np.abs(self.phi).mean(axis=0).T

    def top_features(self, class_index: int, k: int) -> list[str]:
        imp = self.global_importance()[class_index]
        order = sorted(range(len(imp)), key=lambda j: (-imp[j], j))
        return [self.feature_names[j] for j in order[:k]]


def explain_dataset(
    ensemble: TreeEnsemble,
    X,
    feature_names: Sequence[str] | None = None,
    instance_ids: Sequence | None = None,
) -> BeeswarmTable:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.size == 0 or X.shape[0] == 0:
        raise InvalidArgument("no instances to explain")
    phi, base = shap_values(ensemble, X)
    names = list(feature_names) if feature_names is not None else _names(ensemble)
    ids = list(instance_ids) if instance_ids is not None else list(range(X.shape[0]))
    return BeeswarmTable(ids, names, X, phi, base, ensemble.predict_raw(X), _output_kind(ensemble))


@dataclass
class WaterfallStep:
    feature: str
    feature_value: float
    shap_value: float
    cumulative: float


@dataclass
class Waterfall:
    base_value: float
    steps: list[WaterfallStep] = field(default_factory=list)
    fx: float = 0.0
    class_index: int = 0

    @property
    def final(self) -> float:
        return self.steps[-1].cumulative if self.steps else self.base_value

    def to_dict(self) -> dict:
        return {
            "class": self.class_index,
            "base_value": self.base_value,
            "contributions": [
                {"feature": s.feature, "feature_value": s.feature_value, "shap_value": s.shap_value,
                 "cumulative": s.cumulative}
                for s in self.steps
            ],
            "fx": self.fx,
        }


def waterfall(explanation: Explanation, class_index: int | None = None) -> Waterfall:
    """Non-zero contributions ordered by |phi|, accumulated from the base value."""
    k = explanation.class_index if class_index is None else class_index
    if k is None:
        k = int(np.argmax(explanation.fx))
    phi = explanation.phi[:, k]
    order = sorted((j for j in range(len(phi)) if phi[j] != 0.0), key=lambda j: (-abs(phi[j]), j))
    running = float(explanation.base_value[k])
    steps = []
    for j in order:
        running += float(phi[j])
        steps.append(WaterfallStep(explanation.feature_names[j], float(explanation.feature_values[j]),
                                   float(phi[j]), running))
    return Waterfall(float(explanation.base_value[k]), steps, float(explanation.fx[k]), k)


def write_beeswarm_csv(table: BeeswarmTable, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance_id", "class", "feature", "feature_value", "shap_value"])
        for inst, name, value, shap_value, k in table.rows():
            writer.writerow([inst, k, name, repr(value), repr(shap_value)])


def write_importance_csv(table: BeeswarmTable, path: str | Path) -> None:
    imp = table.global_importance()
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "feature", "mean_abs_shap"])
        for k in range(imp.shape[0]):
            for j, name in enumerate(table.feature_names):
                writer.writerow([k, name, repr(float(imp[k, j]))])


def write_waterfall_json(wf: Waterfall, path: str | Path, extra: dict | None = None) -> None:
    payload = wf.to_dict()
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2))
