import csv
import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_ensemble, random_tree
from drivestyle.errors import FeasibilityError, InvalidArgument
from drivestyle.explain import (
    Explanation,
    brute_force_shap,
    conditional_expectation,
    expected_value,
    explain_dataset,
    shap_values,
    tree_shap,
    waterfall,
    write_beeswarm_csv,
    write_importance_csv,
    write_waterfall_json,
)
from drivestyle.models import TreeEnsemble, fit_forest, fit_gbt
from drivestyle.models.tree import LEAF, Tree


def _stump(a=1.0, b=3.0, feature=1, t=0.0, covers=(50.0, 50.0)):
    return Tree(np.array([feature, LEAF, LEAF]), np.array([t, 0.0, 0.0]), np.array([1, LEAF, LEAF]),
                np.array([2, LEAF, LEAF]), np.array([sum(covers), *covers]), np.array([[0.0], [a], [b]]))


def _path_enumeration(tree: Tree, x, S) -> np.ndarray:
    """Sum over leaves of value times the product of per-edge weights."""
    total = np.zeros(tree.n_outputs)
    parents = {}
    for i in range(tree.n_nodes):
        if tree.feature[i] != LEAF:
            parents[int(tree.left[i])] = (i, True)
            parents[int(tree.right[i])] = (i, False)
    for leaf in tree.leaves():
        weight, node = 1.0, int(leaf)
        while node in parents:
            p, is_left = parents[node]
            f = int(tree.feature[p])
            if f in S:
                weight *= float((x[f] <= tree.threshold[p]) == is_left)
            else:
                weight *= tree.cover[node] / tree.cover[p]
            node = p
        total += weight * tree.value[leaf]
    return total


def _permutation_shap(ensemble, x) -> np.ndarray:
    """Average marginal contribution over every feature ordering."""
    m = ensemble.n_features
    phi = np.zeros((m, ensemble.n_classes))

    def f(S):
        total = sum(_path_enumeration(t, x, S) for t in ensemble.trees)
        return ensemble.offset + ensemble.tree_weight * total

    perms = list(itertools.permutations(range(m)))
    for order in perms:
        seen = set()
        for i in order:
            before = f(seen)
            seen.add(i)
            phi[i] += f(seen) - before
    return phi / len(perms)


def test_single_leaf_expectation():
    leaf = Tree(np.array([LEAF]), np.array([0.0]), np.array([LEAF]), np.array([LEAF]), np.array([4.0]),
                np.array([[0.7, 0.3]]))
    for S in ([], [0], [0, 1]):
        np.testing.assert_array_equal(conditional_expectation(leaf, [1.0, 2.0], S), [0.7, 0.3])


def test_stump_expectation():
    tree = _stump()
    x = [9.0, -1.0]
    assert conditional_expectation(tree, x, [])[0] == 2.0
    assert conditional_expectation(tree, x, [1])[0] == 1.0
    assert conditional_expectation(tree, x, [0])[0] == 2.0


def test_expectation_matches_path_enumeration(rng):
    for _ in range(200):
        tree = random_tree(rng, 5, 3, 2)
        x = rng.normal(size=5)
        S = [j for j in range(5) if rng.random() < 0.5]
        np.testing.assert_allclose(conditional_expectation(tree, x, S), _path_enumeration(tree, x, S), atol=1e-12)


def test_stump_shap_hand_values():
    model = TreeEnsemble([_stump()], "boosted", 1, 3, base_score=np.zeros(1))
    for fn in (brute_force_shap, tree_shap):
        expl = fn(model, [5.0, -1.0, 2.0])
        np.testing.assert_allclose(expl.phi[:, 0], [0.0, -1.0, 0.0], atol=1e-15)
        assert expl.base_value[0] == pytest.approx(2.0)
        assert expl.fx[0] == 1.0


def test_single_leaf_ensemble_has_zero_phi():
    leaf = Tree(np.array([LEAF]), np.array([0.0]), np.array([LEAF]), np.array([LEAF]), np.array([4.0]),
                np.array([[0.2, 0.8]]))
    model = TreeEnsemble([leaf], "forest", 2, 3)
    for fn in (brute_force_shap, tree_shap):
        expl = fn(model, [1.0, 2.0, 3.0])
        assert (expl.phi == 0).all()
        np.testing.assert_array_equal(expl.base_value, [0.2, 0.8])


def test_brute_force_matches_permutation_form(rng):
    for _ in range(40):
        model = random_ensemble(rng, n_features=int(rng.integers(1, 5)))
        x = rng.normal(size=model.n_features)
        np.testing.assert_allclose(brute_force_shap(model, x).phi, _permutation_shap(model, x), atol=1e-10)


def test_tree_shap_matches_brute_force(rng):
    for _ in range(150):
        model = random_ensemble(rng)
        x = rng.normal(size=model.n_features)
        np.testing.assert_allclose(tree_shap(model, x).phi, brute_force_shap(model, x).phi, rtol=0, atol=1e-9)


def test_tree_shap_repeated_features_on_path(rng):
    # narrow feature pools force the same feature to recur along paths
    for _ in range(50):
        model = random_ensemble(rng, n_features=2)
        x = rng.normal(size=2)
        np.testing.assert_allclose(tree_shap(model, x).phi, brute_force_shap(model, x).phi, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_efficiency_property(seed):
    rng = np.random.default_rng(seed)
    model = random_ensemble(rng)
    x = rng.normal(size=model.n_features)
    expl = tree_shap(model, x)
    np.testing.assert_allclose(expl.base_value + expl.phi.sum(axis=0), expl.fx, atol=1e-9)
    np.testing.assert_allclose(expl.base_value, expected_value(model), atol=1e-12)


def test_unused_feature_is_exactly_zero(rng):
    for _ in range(50):
        model = random_ensemble(rng, n_features=6)
        x = rng.normal(size=6)
        used = set().union(*(t.used_features() for t in model.trees))
        phi = tree_shap(model, x).phi
        for j in set(range(6)) - used:
            assert (phi[j] == 0.0).all()


def test_symmetric_features_get_equal_phi():
    # f = 1 iff x0 > 0 and x1 > 0, balanced covers: features 0 and 1 are interchangeable
    tree = Tree(
        np.array([0, LEAF, 1, LEAF, LEAF]), np.array([0.0, 0, 0.0, 0, 0]),
        np.array([1, LEAF, 3, LEAF, LEAF]), np.array([2, LEAF, 4, LEAF, LEAF]),
        np.array([40.0, 20, 20, 10, 10]), np.array([[0.0], [0.0], [0.0], [0.0], [1.0]]),
    )
    model = TreeEnsemble([tree], "boosted", 1, 3, base_score=np.zeros(1))
    for x in ([1.0, 1.0, 5.0], [-1.0, -1.0, 0.0]):
        phi = tree_shap(model, x).phi[:, 0]
        assert abs(phi[0] - phi[1]) <= 1e-9
        assert phi[2] == 0.0


def test_boosted_additivity(rng):
    for _ in range(30):
        t1, t2 = random_tree(rng, 4, 3, 2), random_tree(rng, 4, 3, 2)
        x = rng.normal(size=4)
        zero = np.zeros(2)
        both = tree_shap(TreeEnsemble([t1, t2], "boosted", 2, 4, zero), x).phi
        one = tree_shap(TreeEnsemble([t1], "boosted", 2, 4, zero), x).phi
        two = tree_shap(TreeEnsemble([t2], "boosted", 2, 4, zero), x).phi
        np.testing.assert_allclose(both, one + two, atol=1e-12)


def test_fitted_models_explain_exactly():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(120, 6))
    y = (X[:, 0] > 0).astype(int) + (X[:, 1] > 0.5)
    for model in (fit_forest(X, y, n_trees=5, max_depth=4), fit_gbt(X, y, n_rounds=3, max_depth=3)):
        phi, base = shap_values(model, X[:10])
        raw = model.predict_raw(X[:10])
        np.testing.assert_allclose(base + phi.sum(axis=1), raw, atol=1e-9)
        np.testing.assert_allclose(phi[3], brute_force_shap(model, X[3]).phi, atol=1e-9)


def test_brute_force_refuses_large_m():
    model = random_ensemble(np.random.default_rng(0), n_features=13)
    with pytest.raises(FeasibilityError):
        brute_force_shap(model, np.zeros(13))


def test_wrong_instance_length():
    model = random_ensemble(np.random.default_rng(0), n_features=3)
    with pytest.raises(InvalidArgument):
        tree_shap(model, np.zeros(4))


def test_beeswarm_cardinality_and_files(tmp_path):
    rng = np.random.default_rng(1)
    model = random_ensemble(rng, "forest", n_features=12, n_classes=3)
    X = rng.normal(size=(10, 12))
    table = explain_dataset(model, X)
    rows = list(table.rows())
    assert len(rows) == len(table) == 360
    assert len({(r[0], r[1], r[4]) for r in rows}) == 360
    np.testing.assert_allclose(table.base_value + table.phi.sum(axis=1), table.fx, atol=1e-9)
    write_beeswarm_csv(table, tmp_path / "b.csv")
    with (tmp_path / "b.csv").open() as fh:
        assert len(list(csv.reader(fh))) == 361
    write_importance_csv(table, tmp_path / "i.csv")
    imp = table.global_importance()
    np.testing.assert_allclose(imp, np.abs(table.phi).mean(axis=0).T)
    assert len(table.top_features(2, 4)) == 4


def _expl(phi, base=0.5):
    phi = np.asarray(phi, dtype=float)[:, None]
    names = [f"f{i + 1}" for i in range(len(phi))]
    return Explanation(np.array([base]), phi, np.array([base + phi.sum()]), names, np.zeros(len(phi)))


def test_waterfall_examples(tmp_path):
    wf = waterfall(_expl([0.0, 0.0]), 0)
    assert wf.steps == [] and wf.final == 0.5

    wf = waterfall(_expl([-0.1, 0.3]), 0)
    assert [(s.feature, s.shap_value) for s in wf.steps] == [("f2", 0.3), ("f1", -0.1)]
    assert wf.final == pytest.approx(0.7)
    write_waterfall_json(wf, tmp_path / "w.json", {"instance_id": 1})
    data = json.loads((tmp_path / "w.json").read_text())
    assert data["instance_id"] == 1
    assert math.isclose(data["contributions"][-1]["cumulative"], 0.7)
