"""Predictor-layer tests: both backends behind one fit/predict interface."""

import numpy as np
import pytest

from vflsim.datasets import BlobSpec, synth_blobs
from vflsim.errors import ContractError, DimensionError, NonDifferentiableModelError
from vflsim.predictors import (
    PredictorSpec,
    fit_classifier,
    fit_regressor,
    input_gradient,
    predict,
    predict_classes,
)


def blob_data(seed=0, n=400, classes=3):
    spec = BlobSpec(n=n, dim=4, classes=classes, separation=6.0, noise=1.0)
    return synth_blobs(spec, seed_parts=(seed, "blobs"))


class TestClassifiers:
    @pytest.mark.parametrize("kind", ["mlp", "trees"])
    def test_learns_separated_blobs(self, kind):
        table = blob_data()
        spec = PredictorSpec(kind=kind, output_dim=3, epochs=40, n_rounds=60)
        model = fit_classifier(spec, table.features, table.labels, seed_parts=(1,))
        acc = float(np.mean(predict_classes(model, table.features) == table.labels))
        assert acc > 0.95

    @pytest.mark.parametrize("kind", ["mlp", "trees"])
    def test_probability_rows_sum_to_one(self, kind):
        table = blob_data(seed=2)
        spec = PredictorSpec(kind=kind, output_dim=3, epochs=5, n_rounds=10)
        model = fit_classifier(spec, table.features, table.labels)
        scores = predict(model, table.features[:50])
        assert scores.shape == (50, 3)
        assert np.all(scores >= 0.0)
        np.testing.assert_allclose(scores.sum(axis=1), 1.0, atol=1e-9)

    def test_binary_trees_expand_to_two_columns(self):
        table = blob_data(seed=3, classes=2)
        spec = PredictorSpec(kind="trees", output_dim=2, n_rounds=30)
        model = fit_classifier(spec, table.features, table.labels)
        assert model.forest.output_dim == 1
        scores = predict(model, table.features[:20])
        assert scores.shape == (20, 2)
        np.testing.assert_allclose(scores.sum(axis=1), 1.0)

    def test_single_class_set_warns_and_is_constant(self):
        x = np.random.default_rng(0).normal(size=(30, 2))
        labels = np.full(30, 2, dtype=np.int64)
        spec = PredictorSpec(kind="mlp", output_dim=4)
        with pytest.warns(UserWarning, match="single-class"):
            model = fit_classifier(spec, x, labels)
        scores = predict(model, x[:5])
        np.testing.assert_array_equal(scores, np.tile([0, 0, 1, 0], (5, 1)))
        assert np.all(predict_classes(model, x[:5]) == 2)

    def test_output_dim_must_cover_labels(self):
        x = np.zeros((10, 2))
        labels = np.array([0, 3] * 5, dtype=np.int64)
        with pytest.raises(DimensionError):
            fit_classifier(PredictorSpec(kind="mlp", output_dim=3), x, labels)

    def test_fit_is_deterministic_in_seed(self):
        table = blob_data(seed=4)
        spec = PredictorSpec(kind="mlp", output_dim=3, epochs=3)
        a = fit_classifier(spec, table.features, table.labels, seed_parts=(9, "x"))
        b = fit_classifier(spec, table.features, table.labels, seed_parts=(9, "x"))
        np.testing.assert_array_equal(
            predict(a, table.features[:40]), predict(b, table.features[:40])
        )
        c = fit_classifier(spec, table.features, table.labels, seed_parts=(10, "x"))
        assert not np.array_equal(
            predict(a, table.features[:40]), predict(c, table.features[:40])
        )


class TestRegressors:
    @pytest.mark.parametrize("kind", ["mlp", "trees"])
    def test_fits_smooth_target(self, kind):
        rng = np.random.default_rng(1)
        x = rng.uniform(-2, 2, size=(500, 2))
        target = np.column_stack([np.sin(x[:, 0]), x[:, 1] ** 2])
        spec = PredictorSpec(
            kind=kind,
            output_dim=2,
            epochs=100,
            learning_rate=3e-3,
            weight_decay=1e-4,
            n_rounds=150,
        )
        model = fit_regressor(spec, x, target, seed_parts=(5,))
        preds = predict(model, x)
        assert float(np.mean((preds - target) ** 2)) < 0.05

    def test_one_dim_target_can_be_flat(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(50, 3))
        target = x[:, 0]
        spec = PredictorSpec(kind="trees", output_dim=1, n_rounds=5)
        model = fit_regressor(spec, x, target)
        assert predict(model, x).shape == (50, 1)

    def test_target_width_is_checked(self):
        x = np.zeros((10, 2))
        with pytest.raises(DimensionError):
            fit_regressor(PredictorSpec(output_dim=3), x, np.zeros((10, 2)))

    def test_loss_trace_is_recorded(self):
        table = blob_data(seed=6)
        spec = PredictorSpec(kind="mlp", output_dim=1, epochs=7)
        model = fit_regressor(spec, table.features, table.labels.astype(float))
        assert len(model.loss_trace) == 7
        assert model.loss_trace[-1] < model.loss_trace[0]


class TestGradients:
    def test_input_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(4, 3))
        target = rng.normal(size=(4, 2))
        spec = PredictorSpec(kind="mlp", output_dim=2, hidden_dim=8, depth=2, epochs=2)
        model = fit_regressor(spec, x, target, seed_parts=(7,))

        from vflsim import nets

        def objective(inp):
            y, _ = nets.forward(model.net, inp)
            return nets.loss_mse(y, target)

        value, d_y = objective(x)
        analytic = input_gradient(model, x, d_y)
        eps = 1e-6
        for i in range(x.shape[0]):
            for j in range(x.shape[1]):
                bumped = x.copy()
                bumped[i, j] += eps
                up, _ = objective(bumped)
                bumped[i, j] -= 2 * eps
                down, _ = objective(bumped)
                numeric = (up - down) / (2 * eps)
                assert analytic[i, j] == pytest.approx(numeric, abs=1e-6)

    def test_trees_refuse_input_gradients(self):
        table = blob_data(seed=8, classes=2)
        spec = PredictorSpec(kind="trees", output_dim=2, n_rounds=3)
        model = fit_classifier(spec, table.features, table.labels)
        assert not model.differentiable
        with pytest.raises(NonDifferentiableModelError):
            input_gradient(model, table.features[:4], np.zeros((4, 1)))


class TestSpec:
    def test_rejects_unknown_kind(self):
        with pytest.raises(ContractError):
            PredictorSpec(kind="forest")

    def test_rejects_nonpositive_output_dim(self):
        with pytest.raises(ContractError):
            PredictorSpec(output_dim=0)

    def test_differentiable_flag(self):
        assert PredictorSpec(kind="mlp").differentiable
        assert not PredictorSpec(kind="trees").differentiable

    def test_predict_classes_requires_classifier(self):
        x = np.zeros((5, 2))
        model = fit_regressor(PredictorSpec(kind="trees", n_rounds=0), x, np.zeros(5))
        with pytest.raises(ContractError):
            predict_classes(model, x)
