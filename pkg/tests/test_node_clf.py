import numpy as np
import pytest

from core.errors import DataError
from core.graph import LabelVector, build_graph
from core.node_clf import (
    SgcModel,
    SgcTrainConfig,
    Split,
    compare_origin_vs_ne,
    evaluate,
    sgc_features,
    softmax_loss_and_grads,
    train_sgc,
)
from core.refine import RefineConfig, filter_graph, make_noisy_oracle
from core.synth import SynthSpec, generate_labeled_graph

FAST = SgcTrainConfig(epochs=200, patience=30, seed=1)


def dataset(**overrides):
    spec = dict(num_nodes=600, num_classes=4, target_ratio=0.7, mean_degree=6.0,
                feature_dim=16, class_separation=1.0, seed=3)
    spec.update(overrides)
    return generate_labeled_graph(SynthSpec(**spec))


class TestSplit:
    def test_overlap_rejected(self):
        with pytest.raises(DataError, match="overlap"):
            Split.from_lists([0, 1], [1, 2], [3])

    def test_duplicates_rejected(self):
        with pytest.raises(DataError, match="duplicate"):
            Split(np.array([0, 0]), np.array([1]), np.array([2]))

    def test_range_check(self):
        with pytest.raises(DataError):
            Split.from_lists([0], [1], [7]).check_range(5)

    def test_to_dict_sorted(self):
        assert Split.from_lists([3, 1], [], [2]).to_dict() == {"train": [1, 3], "val": [], "test": [2]}


class TestSoftmaxHead:
    @pytest.mark.parametrize("seed", range(50))
    def test_gradients_match_central_differences(self, seed):
        rng = np.random.default_rng(seed)
        n, d, c = int(rng.integers(5, 21)), int(rng.integers(2, 9)), int(rng.integers(2, 6))
        decay = float(rng.uniform(0.0, 0.1))
        H = rng.standard_normal((n, d))
        y = rng.integers(0, c, size=n)
        W, b = rng.standard_normal((d, c)), rng.standard_normal(c)
        _, dW, db = softmax_loss_and_grads(W, b, H, y, weight_decay=decay)

        h = 1e-6
        for tensor, analytic in ((W, dW), (b, db)):
            numeric = np.zeros_like(tensor)
            for idx in np.ndindex(tensor.shape):
                original = tensor[idx]
                tensor[idx] = original + h
                up = softmax_loss_and_grads(W, b, H, y, decay)[0]
                tensor[idx] = original - h
                down = softmax_loss_and_grads(W, b, H, y, decay)[0]
                tensor[idx] = original
                numeric[idx] = (up - down) / (2 * h)
            err = np.linalg.norm(numeric - analytic) / (np.linalg.norm(numeric) + np.linalg.norm(analytic))
            assert err <= 1e-4

    def test_bias_shift_keeps_predictions(self):
        rng = np.random.default_rng(42)
        H = rng.standard_normal((50, 5))
        model = SgcModel(2, rng.standard_normal((5, 3)), rng.standard_normal(3), seed=0)
        shifted = SgcModel(2, model.weights, model.bias + 7.5, seed=0)
        np.testing.assert_array_equal(model.predict(H), shifted.predict(H))

    def test_ties_go_to_lowest_class(self):
        model = SgcModel(0, np.zeros((2, 3)), np.zeros(3), seed=0)
        np.testing.assert_array_equal(model.predict(np.ones((4, 2))), 0)


class TestTrainSgc:
    def test_separable_plain_logistic_regression(self):
        data = dataset(num_classes=2, class_separation=5.0, feature_dim=8)
        cfg = SgcTrainConfig(K=0, epochs=200, seed=0)
        model = train_sgc(data.graph, data.features, data.labels, data.split, cfg)
        report = evaluate(model, data.graph, data.features, data.labels, data.split.test)
        assert report.accuracy > 0.95

    def test_zero_epochs_is_chance_level(self):
        data = dataset(num_nodes=2000, class_separation=0.0)
        model = train_sgc(data.graph, data.features, data.labels, data.split, SgcTrainConfig(epochs=0))
        report = evaluate(model, data.graph, data.features, data.labels, data.split.test)
        assert report.epochs_run == 0
        assert abs(report.accuracy - 0.25) < 0.1

    def test_zero_weights_predict_first_class(self):
        data = dataset()
        model = SgcModel(2, np.zeros((16, 4)), np.zeros(4), seed=0)
        report = evaluate(model, data.graph, data.features, data.labels, data.split.test)
        truth = data.labels.labels[data.split.test]
        assert report.accuracy == pytest.approx(np.mean(truth == 0))
        assert report.per_class_accuracy[0] == 1.0
        assert report.per_class_accuracy[1] == 0.0

    def test_deterministic(self):
        data = dataset()
        a = train_sgc(data.graph, data.features, data.labels, data.split, FAST)
        b = train_sgc(data.graph, data.features, data.labels, data.split, FAST)
        assert np.array_equal(a.weights, b.weights) and a.epochs_run == b.epochs_run

    def test_early_stopping_within_budget(self):
        data = dataset()
        model = train_sgc(data.graph, data.features, data.labels, data.split, SgcTrainConfig(epochs=1000, patience=5))
        assert 1 <= model.epochs_run < 1000

    def test_without_validation_keeps_last_epoch(self):
        data = dataset()
        split = Split(data.split.train, np.empty(0, dtype=np.int64), data.split.test)
        model = train_sgc(data.graph, data.features, data.labels, split, SgcTrainConfig(epochs=7))
        assert model.epochs_run == 7

    def test_empty_train_split(self):
        data = dataset()
        split = Split(np.empty(0, dtype=np.int64), data.split.val, data.split.test)
        with pytest.raises(DataError, match="empty"):
            train_sgc(data.graph, data.features, data.labels, split, FAST)

    def test_unlabeled_training_node(self):
        data = dataset()
        hidden = data.labels.restricted_to(data.split.val)
        with pytest.raises(DataError, match="unlabeled"):
            train_sgc(data.graph, data.features, hidden, data.split, FAST)

    def test_relabeling_invariance(self):
        data = dataset(num_nodes=300)
        perm = np.random.default_rng(0).permutation(300)
        inverse = np.argsort(perm)
        # node i of the permuted graph is node perm[i] of the original
        edges = inverse[data.graph.edge_list()]
        g = build_graph(edges, 300)
        X = data.features[perm]
        y = LabelVector.fully_known(data.labels.labels[perm], data.labels.num_classes)
        split = Split.from_lists(inverse[data.split.train], inverse[data.split.val], inverse[data.split.test])

        a = train_sgc(data.graph, data.features, data.labels, data.split, FAST)
        b = train_sgc(g, X, y, split, FAST)
        acc_a = evaluate(a, data.graph, data.features, data.labels, data.split.test).accuracy
        acc_b = evaluate(b, g, X, y, split.test).accuracy
        assert acc_a == pytest.approx(acc_b, abs=0.01)


class TestEvaluate:
    def test_missing_class_reports_none(self):
        data = dataset()
        model = train_sgc(data.graph, data.features, data.labels, data.split, FAST)
        only_zero = data.split.test[data.labels.labels[data.split.test] == 0]
        report = evaluate(model, data.graph, data.features, data.labels, only_zero)
        assert report.per_class_accuracy[1:] == (None, None, None)
        assert report.to_dict()["per_class"][0] == report.accuracy

    def test_unlabeled_nodes(self):
        data = dataset()
        model = SgcModel(2, np.zeros((16, 4)), np.zeros(4), seed=0)
        y = data.labels.restricted_to(data.split.train)
        with pytest.raises(DataError):
            evaluate(model, data.graph, data.features, y, data.split.test)

    def test_features_are_propagated_rows(self):
        data = dataset(num_nodes=100)
        H = sgc_features(data.graph, data.features, 0, normalize_features=True)
        np.testing.assert_allclose(np.linalg.norm(H, axis=1), 1.0)


class TestCompare:
    def test_same_graph_has_zero_delta(self):
        data = dataset()
        report = compare_origin_vs_ne(data.graph, data.graph, data.features, data.labels, data.split, FAST)
        assert report.delta == 0.0
        assert report.to_dict()["delta"] == 0.0

    def test_perfect_filtering_helps_low_homophily(self):
        data = dataset(num_nodes=800, target_ratio=0.3)
        oracle = make_noisy_oracle(data.labels, 1.0, 0.0, seed=0)
        refined = filter_graph(data.graph, oracle, None, RefineConfig())
        report = compare_origin_vs_ne(data.graph, refined, data.features, data.labels, data.split, FAST)
        assert report.delta > 0
