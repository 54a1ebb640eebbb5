import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mortboost.explain import (
    CapacityError,
    ShapMatrix,
    brute_force_shap,
    expected_value,
    global_importance,
    tree_shap,
)
from mortboost.gbdt import Forest, GbdtParams, ModelSchemaError, Tree, TreeNode, fit, predict_margin

from conftest import random_forest, random_instances


def forest_of(*roots, n_features=2, base=0.0):
    return Forest(base, [Tree.from_node(r) for r in roots], [f"f{j}" for j in range(n_features)], GbdtParams())


L, S = TreeNode.leaf, TreeNode.split


def test_single_leaf_tree():
    model = forest_of(L(0.7, 3.0), base=0.2)
    shap = tree_shap(model, np.array([[1.0, 2.0]]))
    assert shap.values.tolist() == [[0.0, 0.0]]
    assert shap.base_value == pytest.approx(0.9)
    assert brute_force_shap(model, [1.0, 2.0]).tolist() == [0.0, 0.0]


def test_depth_one_formula():
    a, b, wl, wr = -1.5, 2.0, 0.3, 0.7
    model = forest_of(S(0, 0.0, L(a, wl), L(b, wr)))
    shap = tree_shap(model, np.array([[-1.0, 5.0]]))
    assert shap.values[0, 0] == pytest.approx(wr * (a - b), abs=1e-15)
    assert shap.values[0, 1] == 0.0
    assert shap.base_value == pytest.approx(wl * a + wr * b, abs=1e-15)


def test_hand_enumerated_two_feature_tree():
    # root on f0 (covers 4 | 6); left child on f1 (1 | 3), right child leaf
    root = S(0, 0.0, S(1, 0.0, L(1.0, 1.0), L(3.0, 3.0)), L(-2.0, 6.0))
    model = forest_of(root)
    x = np.array([-1.0, 1.0])  # goes left, then right: leaf 3.0
    v_empty = 0.4 * (0.25 * 1 + 0.75 * 3) + 0.6 * -2.0   # -0.2
    v_0 = 0.25 * 1 + 0.75 * 3                              # 2.5
    v_1 = 0.4 * 3 + 0.6 * -2.0                             # 0.0
    v_01 = 3.0
    phi0 = 0.5 * (v_0 - v_empty) + 0.5 * (v_01 - v_1)
    phi1 = 0.5 * (v_1 - v_empty) + 0.5 * (v_01 - v_0)
    assert (phi0, phi1) == pytest.approx((2.85, 0.35))
    np.testing.assert_allclose(brute_force_shap(model, x), [phi0, phi1], atol=1e-15)
    np.testing.assert_allclose(tree_shap(model, x[None]).values[0], [phi0, phi1], atol=1e-15)


def test_symmetry_duplicated_feature():
    # f1 duplicates f0; leaf values depend symmetrically on the two tests
    root = S(0, 0.5, S(1, 0.5, L(1.0, 2.0), L(2.0, 2.0)), S(1, 0.5, L(2.0, 2.0), L(7.0, 2.0)))
    model = forest_of(root, n_features=3)
    for v in (0.0, 1.0, np.nan):
        phi = tree_shap(model, np.array([[v, v, 9.0]])).values[0]
        assert abs(phi[0] - phi[1]) <= 1e-12
        assert phi[2] == 0.0


def test_symmetry_interchangeable_features():
    # v(S) depends only on |S ∩ {f0, f1}|: x routed to the same leaf either way
    root = S(0, 0.5, S(1, 0.5, L(4.0, 1.0), L(0.0, 1.0)), S(1, 0.5, L(0.0, 1.0), L(0.0, 1.0)))
    model = forest_of(root)
    phi = tree_shap(model, np.array([[0.0, 0.0]])).values[0]
    assert abs(phi[0] - phi[1]) <= 1e-12
    np.testing.assert_allclose(phi, brute_force_shap(model, [0.0, 0.0]), atol=1e-12)


def test_additivity_exact():
    rng = np.random.default_rng(0)
    a, b = random_forest(rng, 1), random_forest(rng, 1)
    both = Forest(0.0, a.trees + b.trees, a.feature_names, a.params)
    a.base_score = b.base_score = 0.0
    X = random_instances(rng, 50, 8)
    assert np.array_equal(tree_shap(both, X).values, tree_shap(a, X).values + tree_shap(b, X).values)


def test_dummy_feature_zero():
    rng = np.random.default_rng(1)
    model = random_forest(rng, 3, n_features=8)
    for t in model.trees:
        t.feature[t.feature == 7] = 6
    X = random_instances(rng, 100, 8)
    assert (tree_shap(model, X).values[:, 7] == 0).all()


def test_missing_follows_default():
    model = forest_of(S(0, 0.0, L(-1.0, 1.0), L(1.0, 1.0), default_left=False))
    phi = tree_shap(model, np.array([[np.nan, 0.0]])).values[0]
    assert phi[0] == pytest.approx(0.5 * (1.0 - -1.0))


def test_efficiency_and_local_accuracy_trained_model():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(300, 6))
    y = (X[:, 0] - X[:, 1] > 0).astype(int)
    X[rng.random(X.shape) < 0.1] = np.nan
    model = fit(X, y, GbdtParams(n_trees=20, max_leaves=8, min_samples_leaf=5))
    shap = tree_shap(model, X)
    assert np.max(np.abs(shap.base_value + shap.values.sum(axis=1) - predict_margin(model, X))) <= 1e-9
    for row in X[:5]:
        phi = brute_force_shap(model, row)
        assert phi.sum() == pytest.approx(predict_margin(model, row[None])[0] - shap.base_value, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n_trees=st.integers(1, 3), depth=st.integers(1, 3))
def test_oracle_equivalence(seed, n_trees, depth):
    rng = np.random.default_rng(seed)
    model = random_forest(rng, n_trees, depth)
    X = random_instances(rng, 4, 8)
    fast = tree_shap(model, X)
    for i, row in enumerate(X):
        np.testing.assert_allclose(fast.values[i], brute_force_shap(model, row), rtol=0, atol=1e-8)
    np.testing.assert_allclose(fast.base_value + fast.values.sum(axis=1), predict_margin(model, X), atol=1e-9)


def test_zero_root_cover_is_error():
    tree = Tree.from_node(S(0, 0.0, L(1.0, 0.0), L(2.0, 0.0)))
    with pytest.raises(ModelSchemaError):
        expected_value(tree)


def test_capacity_bound():
    n = 21
    node = L(0.0, 1.0)
    for j in range(n):
        node = S(j, 0.0, node, L(float(j), 1.0))
    model = forest_of(node, n_features=n)
    with pytest.raises(CapacityError):
        brute_force_shap(model, np.zeros(n))


def test_global_importance_all_zero():
    gi = global_importance(ShapMatrix(0.0, np.zeros((3, 3)), ["c", "a", "b"]))
    assert gi.ranking == ["a", "b", "c"]
    assert set(gi.importance.values()) == {0.0}


def test_global_importance_single_column():
    values = np.zeros((4, 3))
    values[:, 2] = [-1, 1, -2, 0]
    gi = global_importance(ShapMatrix(0.0, values, ["a", "b", "c"]))
    assert gi.ranking[0] == "c" and gi.importance["c"] == 1.0
    assert "rank" in gi.to_text() and gi.to_text().count("\n") == 4


def test_shap_serialization(tmp_path):
    shap = ShapMatrix(0.25, np.array([[0.1, -0.2], [1e-17, 3.0]]), ["a", "b"])
    shap.save_json(tmp_path / "s.json")
    again = ShapMatrix.from_dict(json.loads((tmp_path / "s.json").read_text()))
    assert np.array_equal(again.values, shap.values) and again.base_value == 0.25
    shap.save_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "a,b" and len(lines) == 3
    assert float(lines[2].split(",")[0]) == 1e-17
