import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dualscore.distill import (
    ExpertModel, Tree, auc_score, classification_metrics, distill, expert_probabilities, format_expert,
    logistic_loss, parse_expert, smote, soft_label_dataset, train_expert,
)
from dualscore.errors import InvalidInputError
from dualscore.model import Dataset, log_odds_targets, sigmoid


def toy(n=200, seed=0, p=3, positive=0.3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = (X[:, 0] + 0.5 * rng.normal(size=n) > np.quantile(X[:, 0], 1 - positive)).astype(int)
    return X, y


def walk(tree, x):
    """Follow one row from the root, independently of Tree.predict."""
    node = 0
    while tree.feature[node] >= 0:
        node = tree.left[node] if x[tree.feature[node]] <= tree.threshold[node] else tree.right[node]
    return tree.value[node]


class TestSmote:
    def test_balanced_input_unchanged(self):
        X, y = np.arange(8.0).reshape(4, 2), np.array([0, 1, 0, 1])
        X2, y2 = smote(X, y)
        np.testing.assert_array_equal(X2, X)
        np.testing.assert_array_equal(y2, y)

    def test_identical_minority_points(self):
        X = np.vstack([np.zeros((6, 2)), [[2.0, 3.0], [2.0, 3.0]]])
        y = np.array([0] * 6 + [1, 1])
        X2, y2 = smote(X, y, k_neighbors=1)
        assert (y2 == 1).sum() == (y2 == 0).sum() == 6
        np.testing.assert_array_equal(X2[8:], np.tile([2.0, 3.0], (4, 1)))

    def test_two_point_segment(self):
        X = np.vstack([np.full((9, 2), 5.0), [[0.0, 0.0], [1.0, 1.0]]])
        y = np.array([0] * 9 + [1, 1])
        X2, _ = smote(X, y, k_neighbors=1, seed=3)
        synth = X2[11:]
        assert synth.shape == (7, 2)
        np.testing.assert_array_equal(synth[:, 0], synth[:, 1])
        assert np.all((synth >= 0) & (synth <= 1))

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), ratio=st.sampled_from([0.5, 0.8, 1.0]))
    def test_hull_and_majority_untouched(self, seed, ratio):
        X, y = toy(120, seed, positive=0.15)
        X2, y2 = smote(X, y, k_neighbors=3, target_ratio=ratio, seed=seed)
        np.testing.assert_array_equal(X2[: len(y)], X)
        np.testing.assert_array_equal(y2[: len(y)], y)
        synth = X2[len(y):]
        minor = X[y == 1]
        assert np.all(y2[len(y):] == 1)
        assert np.all(synth >= minor.min(axis=0) - 1e-12)
        assert np.all(synth <= minor.max(axis=0) + 1e-12)
        assert (y2 == 1).sum() >= min((y == 1).sum(), round(ratio * (y == 0).sum()))

    @pytest.mark.parametrize("y", [[0, 0, 0, 0], [0, 0, 0, 1]])
    def test_degenerate(self, y):
        with pytest.raises(InvalidInputError):
            smote(np.arange(8.0).reshape(4, 2), y)


class TestExpert:
    def test_threshold_rule_learned(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(300, 3))
        y = (X[:, 0] > 0.2).astype(int)
        model = train_expert(X, y, rounds=10, depth=2)
        assert auc_score(y, expert_probabilities(model, X)) >= 0.99

    def test_zero_rounds_is_label_mean(self):
        X, y = toy()
        model = train_expert(X, y, rounds=0)
        np.testing.assert_allclose(expert_probabilities(model, np.random.default_rng(1).normal(size=(7, 3))),
                                   y.mean(), rtol=1e-12)

    def test_row_permutation(self):
        X, y = toy(150, 2)
        perm = np.random.default_rng(5).permutation(len(y))
        a = train_expert(X, y, rounds=15, depth=3, seed=1)
        b = train_expert(X[perm], y[perm], rounds=15, depth=3, seed=1)
        for ta, tb in zip(a.trees, b.trees):
            np.testing.assert_array_equal(ta.feature, tb.feature)
            np.testing.assert_array_equal(ta.threshold, tb.threshold)
        np.testing.assert_allclose(expert_probabilities(a, X), expert_probabilities(b, X), rtol=1e-12)

    def test_loss_non_increasing(self):
        X, y = toy(200, 4)
        model = train_expert(X, y, rounds=40, depth=3)
        raw = np.full(len(y), model.base_score)
        losses = [logistic_loss(y, raw)]
        for tree in model.trees:
            raw = raw + model.learning_rate * tree.predict(X)
            losses.append(logistic_loss(y, raw))
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_tree_walk_oracle(self):
        X, y = toy(200, 6)
        model = train_expert(X, y, rounds=12, depth=3)
        rows = np.random.default_rng(0).normal(size=(5, 3))
        for x, got in zip(rows, expert_probabilities(model, rows)):
            raw = model.base_score + model.learning_rate * sum(walk(t, x) for t in model.trees)
            assert got == pytest.approx(1 / (1 + math.exp(-raw)), rel=1e-12)

    def test_structure_invariants(self):
        X, y = toy(200, 7)
        model = train_expert(X, y, rounds=8, depth=2)
        for t in model.trees:
            assert np.all(t.feature < model.feature_count)
            assert t.feature.size <= 7
        probs = expert_probabilities(model, 1e3 * np.random.default_rng(0).normal(size=(50, 3)))
        assert np.all((probs > 0) & (probs < 1))

    def test_serialization_round_trip(self):
        X, y = toy(100, 8)
        model = train_expert(X, y, rounds=5, depth=2)
        back = parse_expert(format_expert(model))
        np.testing.assert_array_equal(expert_probabilities(back, X), expert_probabilities(model, X))

    @pytest.mark.parametrize("kwargs", [dict(rounds=-1), dict(depth=0), dict(learning_rate=0.0)])
    def test_bad_hyperparameters(self, kwargs):
        X, y = toy()
        with pytest.raises(InvalidInputError):
            train_expert(X, y, **kwargs)

    def test_needs_rows_and_classes(self):
        with pytest.raises(InvalidInputError):
            train_expert(np.zeros((5, 1)), [0, 1, 0, 1, 0])
        with pytest.raises(InvalidInputError):
            train_expert(np.zeros((20, 1)), np.zeros(20, dtype=int))

    def test_width_mismatch(self):
        X, y = toy()
        with pytest.raises(InvalidInputError):
            expert_probabilities(train_expert(X, y, rounds=1), np.zeros((2, 4)))


class TestSoftLabels:
    def setup_method(self):
        X, y = toy(120, 9)
        self.ds = Dataset(X, np.zeros(len(y)), None, y)
        self.expert = train_expert(X, y, rounds=30, depth=3, learning_rate=0.5)

    def test_memorizing_expert(self):
        # one stump on a column that equals the label, with saturated leaves
        X = np.column_stack([self.ds.hard_labels, self.ds.features[:, 1:]])
        ds = Dataset(X, self.ds.treatment, None, self.ds.hard_labels)
        stump = Tree(np.array([0, -1, -1]), np.array([0.5, 0.0, 0.0]), np.array([1, -1, -1]),
                     np.array([2, -1, -1]), np.array([0.0, -100.0, 100.0]))
        out = soft_label_dataset(ds, ExpertModel([stump], 1.0, 0.0, 3), 1e-6)
        np.testing.assert_allclose(out.soft_probs, ds.hard_labels, atol=1e-6 + 1e-15)
        np.testing.assert_array_equal(out.hard_labels, self.ds.hard_labels)
        assert out.n == self.ds.n

    def test_clip_dominates(self):
        out = soft_label_dataset(self.ds, self.expert, 0.4)
        assert np.all((out.soft_probs >= 0.4) & (out.soft_probs <= 0.6))

    def test_targets_bounded(self):
        out = soft_label_dataset(self.ds, self.expert, 1e-3)
        t = log_odds_targets(out, 1e-3)
        assert np.all(np.isfinite(t))
        assert np.all(np.abs(t) <= math.log((1 - 1e-3) / 1e-3) + 1e-12)

    def test_distill_keeps_original_rows(self):
        X, y = toy(150, 3, positive=0.12)
        ds = Dataset(X, np.zeros(len(y)), None, y)
        out, expert = distill(ds, rounds=10, depth=2)
        assert out.n == ds.n
        np.testing.assert_array_equal(out.features, X)
        assert expert.feature_count == 3

    def test_schema_mismatch(self):
        ds = Dataset(np.zeros((3, 2)), np.zeros(3), None, [0, 1, 0])
        with pytest.raises(InvalidInputError):
            soft_label_dataset(ds, self.expert)


class TestMetrics:
    def test_four_point_fixture(self):
        m = classification_metrics([1, 0, 1, 0], [0.9, 0.8, 0.7, 0.1], 0.5)
        # positives score 0.9, 0.7 and negatives 0.8, 0.1: three of four pairs ordered
        assert m.auc == 0.75
        assert m.precision == 2 / 3
        assert m.recall == 1.0
        assert m.f1 == pytest.approx(0.8, abs=1e-15)

    def test_perfect(self):
        m = classification_metrics([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9])
        assert (m.precision, m.recall, m.f1, m.auc) == (1.0, 1.0, 1.0, 1.0)

    def test_all_ties(self):
        assert classification_metrics([0, 1, 0, 1], [0.5] * 4).auc == 0.5

    def test_threshold_tie_predicts_positive(self):
        m = classification_metrics([1, 0], [0.5, 0.2], 0.5)
        assert m.recall == 1.0 and m.precision == 1.0

    def test_single_class(self):
        m = classification_metrics([1, 1, 1], [0.9, 0.2, 0.7])
        assert math.isnan(m.auc)
        assert m.recall == pytest.approx(2 / 3)
        with pytest.raises(InvalidInputError):
            auc_score([1, 1], [0.2, 0.3])

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 1000))
    def test_auc_monotone_invariance_and_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        y = rng.integers(0, 2, 30)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        s = np.round(rng.random(30), 1)
        pairs = [(a, b) for a in s[y == 1] for b in s[y == 0]]
        brute = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a, b in pairs) / len(pairs)
        assert auc_score(y, s) == pytest.approx(brute, abs=1e-12)
        assert auc_score(y, np.exp(3 * s) - 7) == pytest.approx(brute, abs=1e-12)

    def test_f1_identity(self):
        rng = np.random.default_rng(2)
        y, p = rng.integers(0, 2, 50), rng.random(50)
        m = classification_metrics(y, p, 0.4)
        assert m.f1 == pytest.approx(2 * m.precision * m.recall / (m.precision + m.recall))
