import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netdiag.cart import (
    CARTClassifier,
    best_split,
    cross_validate,
    default_depth,
    extract_rules,
    fit_tree,
    gini,
)
from netdiag.exceptions import (
    AllZero,
    InsufficientSamples,
    MissingAttribute,
    ShapeMismatch,
    TooFewSamples,
    UnknownLabel,
)

from oracles import brute_force_split, hand_built_tree, split_fixture


class TestGini:
    def test_zero_total(self):
        with pytest.raises(AllZero):
            gini([0, 0])

    def test_uniform(self):
        assert gini([3, 3, 3]) == pytest.approx(2 / 3)

    def test_depth_too_few(self):
        with pytest.raises(TooFewSamples):
            default_depth(1)


class TestBestSplit:
    def test_separable_midpoint(self):
        s = best_split([[1.0], [2.0], [9.0], [10.0]], ["A", "A", "B", "B"])
        assert (s.feature, s.threshold, s.impurity) == (0, 5.5, 0.0)

    def test_constant_attribute(self):
        assert best_split([[3.0]] * 4, [0, 1, 0, 1]) is None

    def test_lowest_attribute_wins_ties(self):
        X = np.array([[1, 1], [2, 2], [3, 3], [4, 4]], dtype=float)
        s = best_split(X, [0, 0, 1, 1])
        assert (s.feature, s.threshold) == (0, 2.5)

    def test_min_leaf_restricts_candidates(self):
        X = [[1.0], [2.0], [3.0], [4.0], [5.0]]
        assert best_split(X, [0, 1, 1, 1, 1]).threshold == 1.5
        assert best_split(X, [0, 1, 1, 1, 1], min_leaf=2).threshold == 2.5
        assert best_split(X, [0, 1, 1, 1, 1], min_leaf=3) is None

    def test_adjacent_floats(self):
        lo = 1.0
        hi = np.nextafter(lo, 2.0)
        s = best_split([[lo], [hi]], [0, 1])
        assert lo <= s.threshold < hi

    @pytest.mark.parametrize("seed", range(40))
    def test_matches_brute_force(self, seed):
        X, y = split_fixture(1000 + seed)
        expected = brute_force_split(X, y)
        got = best_split(X, y)
        if expected is None:
            assert got is None
        else:
            assert (got.feature, got.threshold) == expected[:2]


class TestFit:
    def test_pure_labels_single_leaf(self):
        tree = fit_tree([[1.0], [2.0], [3.0]], ["A"] * 3, min_leaf=1)
        assert tree.tree_.is_leaf and tree.tree_.gini == 0.0

    def test_separable_depth_one(self):
        X = [[1.0], [2.0], [9.0], [10.0]]
        tree = fit_tree(X, ["A", "A", "B", "B"], max_depth=1, min_leaf=1)
        assert len(tree.nodes()) == 3
        assert tree.predict(X).tolist() == ["A", "A", "B", "B"]

    def test_auto_depth(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(300, 2))
        tree = fit_tree(X, (X[:, 0] > 0).astype(int))
        assert tree.max_depth_ == default_depth(300) == 4
        assert max(n.depth for n in tree.nodes()) <= 4

    @pytest.mark.parametrize("seed", range(15))
    def test_beats_majority_baseline(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(12, 3))
        y = rng.integers(0, 3, 12)
        tree = fit_tree(X, y, max_depth=3, min_leaf=1)
        accuracy = (tree.predict(X) == y).mean()
        assert accuracy >= np.bincount(y).max() / 12

    def test_node_ids_preorder_and_gini_consistent(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(200, 3))
        y = (X[:, 0] + X[:, 1] > 0).astype(int) + (X[:, 2] > 1)
        tree = fit_tree(X, y, max_depth=4, min_leaf=2)
        nodes = tree.nodes()
        assert [n.node_id for n in nodes] == list(range(len(nodes)))
        for n in nodes:
            assert abs(n.gini - gini(n.class_counts)) <= 1e-12
            if not n.is_leaf:
                assert np.add(n.left.class_counts, n.right.class_counts).tolist() == list(n.class_counts)
                assert min(n.left.n_samples, n.right.n_samples) >= 2

    def test_deterministic(self):
        X, y = np.random.default_rng(9).normal(size=(100, 3)), np.arange(100) % 3
        assert fit_tree(X, y).to_dict() == fit_tree(X, y).to_dict()

    def test_estimator_api(self):
        est = CARTClassifier(max_depth=2, min_leaf=1)
        assert est.get_params()["max_depth"] == 2
        est.set_params(min_leaf=3)
        assert est.min_leaf == 3
        est.set_params(min_leaf=1)
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        est.fit(X, [0, 0, 1, 1])
        assert est.score(X, [0, 0, 1, 1]) == 1.0
        assert est.predict_proba(X).sum(axis=1) == pytest.approx(np.ones(4))

    def test_errors(self):
        with pytest.raises(ShapeMismatch):
            fit_tree([[1.0], [2.0]], [0])
        with pytest.raises(UnknownLabel):
            fit_tree([[1.0], [2.0]], ["A", "Z"], class_order=["A", "B"])
        tree = fit_tree([[1.0, 0.0], [2.0, 0.0]], ["A", "B"], min_leaf=1, feature_names=["u", "v"])
        with pytest.raises(ShapeMismatch):
            tree.predict([[1.0]])
        with pytest.raises(MissingAttribute):
            tree.predict_sample({"v": 0.0})

    def test_predict_sample_and_path(self):
        tree = hand_built_tree()
        sample = {"Abs_RTT_VolStep_630KB": 300.0, "Abs_RTT_VolStep_240KB": 50.0, "Abs_RTT_max": 2000.0}
        path = tree.decision_path(sample)
        assert [n.node_id for n in path] == [0, 8, 9, 11]
        assert tree.predict_sample(sample) == "Bad"

    def test_dict_roundtrip(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(60, 2))
        y = np.where(X[:, 0] > 0, "hi", "lo")
        tree = fit_tree(X, y, max_depth=2, min_leaf=1, feature_names=["p", "q"])
        back = CARTClassifier.from_dict(tree.to_dict())
        assert back.to_dict() == tree.to_dict()
        assert back.predict(X).tolist() == tree.predict(X).tolist()


class TestRules:
    def test_probabilities_are_count_ratios(self):
        tree = hand_built_tree()
        for rule, node in zip(extract_rules(tree), tree.nodes()):
            assert rule.node_id == node.node_id
            assert rule.probability == max(node.class_counts) / node.n_samples
            assert rule.support == node.n_samples
            assert len(rule.conditions) == node.depth

    def test_low_support_flag_and_rows(self):
        rules = hand_built_tree().extract_rules()
        assert len(rules.leaves()) == 8
        rlr = rules.by_node(11)
        assert rlr.support == 5 and not rlr.low_support
        rows = rules.to_rows()
        assert rows[0]["rule"] == "(all samples)" and rows[0]["leaf"] == 0
        assert float(rows[11]["probability"]) == 1.0


class TestCrossValidate:
    def test_recovers_useful_depth(self):
        # four-step staircase: one split separates two steps, two levels all four
        rng = np.random.default_rng(0)
        x = rng.uniform(0, 4, 600)
        X = np.column_stack([x, rng.normal(size=600)])
        y = np.floor(x).astype(int)
        scores = cross_validate(X, y, [1, 2, 4], folds=5, repeats=2, min_leaf=2)
        means = [s.mean for s in scores]
        assert means[0] < means[1] < means[2]
        assert means[2] > 0.95
        for s in scores:
            assert s.n_scores == 10 and s.ci_low <= s.mean <= s.ci_high

    def test_seeded(self):
        rng = np.random.default_rng(1)
        X, y = rng.normal(size=(50, 2)), rng.integers(0, 2, 50)
        a = cross_validate(X, y, [1, 2], repeats=3, seed=7)
        assert a == cross_validate(X, y, [1, 2], repeats=3, seed=7)

    @pytest.mark.parametrize("kwargs", [dict(folds=1), dict(folds=20)])
    def test_insufficient(self, kwargs):
        with pytest.raises(InsufficientSamples):
            cross_validate(np.zeros((10, 1)), [0, 1] * 5, [1], **kwargs)

    def test_singleton_class(self):
        with pytest.raises(InsufficientSamples):
            cross_validate(np.zeros((10, 1)), [0] * 9 + [1], [1])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_children_never_raise_impurity(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 40))
    X = rng.integers(0, 5, size=(n, 2)).astype(float)
    y = rng.integers(0, 3, n)
    tree = fit_tree(X, y, max_depth=4, min_leaf=1)
    for node in tree.nodes():
        if not node.is_leaf:
            w = sum(c.n_samples * c.gini for c in (node.left, node.right)) / node.n_samples
            assert w <= node.gini + 1e-12
