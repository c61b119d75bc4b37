"""Tests for the weighted softmax classifier."""

import numpy as np
import pytest

from labelshift import (
    DimensionMismatch,
    InvalidBeta,
    LabeledDataset,
    SoftmaxModel,
    TrainConfig,
    loss_and_gradient,
    predict,
    predict_proba,
    split_source,
    train,
    weighted_loss,
)
from labelshift.distributions import LabelDist, ShiftSpec, importance_weights, make_shift
from labelshift.experiments import gen_gaussian_mixture
from labelshift.pipeline import run_batch


def small_dataset(seed=0, n=20, d=4, k=3):
    rng = np.random.default_rng(seed)
    return LabeledDataset(rng.normal(size=(n, d)), rng.integers(0, k, size=n), k)


class TestDatasetValidation:
    def test_nan_rejected(self):
        with pytest.raises(Exception):
            LabeledDataset(np.array([[np.nan, 1.0]]), np.array([0]), 2)

    def test_label_range(self):
        with pytest.raises(Exception):
            LabeledDataset(np.ones((2, 2)), np.array([0, 5]), 2)


class TestWeightedLoss:
    def test_unit_weights_match_plain_mean(self):
        data = small_dataset()
        model = train(data, np.ones(3), TrainConfig(epochs=10))
        proba = predict_proba(model, data.features)
        plain = float(np.mean(-np.log(proba[np.arange(data.n), data.labels])))
        np.testing.assert_allclose(weighted_loss(model, data, np.ones(3)), plain, rtol=1e-12)

    def test_zero_weights_give_zero(self):
        data = small_dataset()
        model = train(data, np.ones(3), TrainConfig(epochs=5))
        assert weighted_loss(model, data, np.zeros(3)) == 0.0

    def test_three_sample_hand_case(self):
        # logits fixed by hand; k=2, d=1
        model = SoftmaxModel(weights=np.array([[1.0], [-1.0]]), bias=np.array([0.0, 0.5]))
        x = np.array([[1.0], [0.0], [-2.0]])
        y = np.array([0, 1, 1])
        data = LabeledDataset(x, y, 2)
        w = np.array([2.0, 0.5])
        logits = x @ model.weights.T + model.bias
        probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        expected = np.mean(w[y] * -np.log(probs[np.arange(3), y]))
        np.testing.assert_allclose(weighted_loss(model, data, w), expected, rtol=1e-12)

    def test_zero_one_variant(self):
        data = small_dataset()
        model = train(data, np.ones(3), TrainConfig(epochs=5))
        val = weighted_loss(model, data, np.ones(3), loss="zero_one")
        preds = predict(model, data.features)
        np.testing.assert_allclose(val, np.mean(preds != data.labels))


class TestGradient:
    def test_matches_central_differences(self):
        rng = np.random.default_rng(1)
        data = small_dataset(seed=1)
        class_weights = rng.uniform(0.2, 3.0, size=3)
        weights = rng.normal(size=(3, 4)) * 0.5
        bias = rng.normal(size=3) * 0.1
        _, grad_w, grad_b = loss_and_gradient(weights, bias, data, class_weights, 0.01)
        eps = 1e-6
        for i in range(3):
            for j in range(4):
                up, down = weights.copy(), weights.copy()
                up[i, j] += eps
                down[i, j] -= eps
                lu, _, _ = loss_and_gradient(up, bias, data, class_weights, 0.01)
                ld, _, _ = loss_and_gradient(down, bias, data, class_weights, 0.01)
                fd = (lu - ld) / (2 * eps)
                assert abs(fd - grad_w[i, j]) <= 1e-5 * max(abs(fd), 1.0)
        for i in range(3):
            up, down = bias.copy(), bias.copy()
            up[i] += eps
            down[i] -= eps
            lu, _, _ = loss_and_gradient(weights, up, data, class_weights, 0.01)
            ld, _, _ = loss_and_gradient(weights, down, data, class_weights, 0.01)
            fd = (lu - ld) / (2 * eps)
            assert abs(fd - grad_b[i]) <= 1e-5 * max(abs(fd), 1.0)


class TestTrain:
    def test_separable_blobs_zero_error(self):
        rng = np.random.default_rng(2)
        x = np.vstack(
            [
                rng.normal(loc=(-4.0, 0.0), scale=0.3, size=(30, 2)),
                rng.normal(loc=(4.0, 0.0), scale=0.3, size=(30, 2)),
            ]
        )
        y = np.array([0] * 30 + [1] * 30)
        data = LabeledDataset(x, y, 2)
        model = train(data, np.ones(2), TrainConfig(learning_rate=0.5, epochs=400, seed=0))
        assert np.mean(predict(model, x) != y) == 0.0

    def test_same_seed_bitwise_identical(self):
        data = small_dataset(seed=3)
        cfg = TrainConfig(learning_rate=0.4, epochs=60, l2_penalty=1e-3, seed=11)
        a = train(data, np.ones(3), cfg)
        b = train(data, np.ones(3), cfg)
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.bias, b.bias)
        assert a.train_log == b.train_log

    def test_train_log_non_increasing_after_burn_in(self):
        data = small_dataset(seed=4, n=60)
        model = train(data, np.ones(3), TrainConfig(learning_rate=0.3, epochs=200))
        log = np.array(model.train_log[5:])
        assert np.all(np.diff(log) <= 1e-12)

    def test_weight_scaling_matches_rescaled_rate(self):
        # power-of-two factor keeps the float sequences bitwise identical
        rng = np.random.default_rng(5)
        data = small_dataset(seed=5)
        class_weights = rng.uniform(0.2, 3.0, size=3)
        c = 4.0
        a = train(data, class_weights, TrainConfig(learning_rate=0.25, epochs=50, seed=9))
        b = train(data, class_weights * c, TrainConfig(learning_rate=0.25 / c, epochs=50, seed=9))
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.bias, b.bias)

    def test_zero_weight_class_equivalent_to_dropping_it(self):
        # matched effective step sizes: the weighted objective with a zeroed
        # class is the dropped-class objective scaled by n'/n
        rng = np.random.default_rng(6)
        x = rng.normal(size=(40, 2))
        y = rng.integers(0, 3, size=40)
        full = LabeledDataset(x, y, 3)
        keep = y != 0
        reduced = LabeledDataset(x[keep], y[keep], 3)
        w = np.array([0.0, 1.0, 1.0])
        lr, epochs = 1.0, 3000
        a = train(full, w, TrainConfig(learning_rate=lr, epochs=epochs, seed=1))
        b = train(
            reduced, w, TrainConfig(learning_rate=lr * reduced.n / full.n, epochs=epochs, seed=1)
        )
        la = weighted_loss(a, reduced, w)
        lb = weighted_loss(b, reduced, w)
        assert abs(la - lb) < 1e-6

    def test_zero_weight_class_never_predicted_binary(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(50, 3))
        y = rng.integers(0, 2, size=50)
        data = LabeledDataset(x, y, 2)
        model = train(data, np.array([0.0, 1.0]), TrainConfig(learning_rate=0.8, epochs=500))
        assert np.all(predict(model, x) == 1)


class TestPredict:
    def test_zero_model_ties_to_class_zero(self):
        model = SoftmaxModel(weights=np.zeros((3, 2)), bias=np.zeros(3))
        preds = predict(model, np.random.default_rng(0).normal(size=(10, 2)))
        np.testing.assert_array_equal(preds, 0)

    def test_hand_logits(self):
        model = SoftmaxModel(weights=np.array([[1.0], [2.0]]), bias=np.array([0.0, -0.5]))
        assert predict(model, np.array([[1.0]]))[0] == 1  # logits (1, 1.5)
        assert predict(model, np.array([[-1.0]]))[0] == 0  # logits (-1, -2.5)

    def test_proba_rows_sum_to_one(self):
        rng = np.random.default_rng(8)
        model = SoftmaxModel(weights=rng.normal(size=(4, 3)), bias=rng.normal(size=4))
        proba = predict_proba(model, rng.normal(size=(50, 3)))
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)

    def test_dimension_mismatch(self):
        model = SoftmaxModel(weights=np.zeros((2, 3)), bias=np.zeros(2))
        with pytest.raises(DimensionMismatch):
            predict(model, np.zeros((5, 4)))


class TestSplitSource:
    def test_even_split(self):
        data = small_dataset(n=100)
        class_set, weight_set = split_source(data, 0.5, seed=0)
        assert class_set.n == 50 and weight_set.n == 50

    def test_rounding(self):
        data = small_dataset(n=10)
        class_set, weight_set = split_source(data, 0.7, seed=0)
        assert class_set.n == 7 and weight_set.n == 3

    def test_partition_preserves_multiset(self):
        data = small_dataset(n=37)
        class_set, weight_set = split_source(data, 0.4, seed=5)
        merged = np.vstack([class_set.features, weight_set.features])
        np.testing.assert_allclose(
            np.sort(merged, axis=0), np.sort(data.features, axis=0)
        )

    def test_invalid_beta(self):
        with pytest.raises(InvalidBeta):
            split_source(small_dataset(), 0.0, seed=0)
        with pytest.raises(InvalidBeta):
            split_source(small_dataset(), 1.0, seed=0)


class TestModelSerialization:
    def test_csv_roundtrip(self):
        rng = np.random.default_rng(9)
        model = SoftmaxModel(weights=rng.normal(size=(3, 5)), bias=rng.normal(size=3))
        again = SoftmaxModel.from_csv(model.to_csv())
        np.testing.assert_array_equal(again.weights, model.weights)
        np.testing.assert_array_equal(again.bias, model.bias)


class TestOracleWeightImprovement:
    def test_true_weights_beat_unweighted_on_shifted_source(self):
        k, d, n_p = 10, 5, 2000
        uniform = LabelDist(np.full(k, 0.1))
        oracle_acc, plain_acc = [], []
        for trial in range(20):
            seeds = np.random.SeedSequence((88, trial)).generate_state(4, dtype=np.uint64)
            src_dist = make_shift(ShiftSpec(kind="tweak_one", rho=0.8, seed=int(seeds[0])), k)
            w_true = importance_weights(uniform, src_dist)
            source = gen_gaussian_mixture(k, d, src_dist, n_p, 42, draw_seed=int(seeds[1]))
            target = gen_gaussian_mixture(k, d, uniform, 2000, 42, draw_seed=int(seeds[2]))
            for method, out in (("oracle", oracle_acc), ("unweighted", plain_acc)):
                result = run_batch(
                    source,
                    target.features,
                    beta=0.5,
                    method=method,
                    true_weights=w_true,
                    target_labels=target.labels,
                    train_cfg=TrainConfig(epochs=300),
                    seed=int(seeds[3]),
                )
                out.append(result.accuracy)
        assert np.median(oracle_acc) >= np.median(plain_acc)
