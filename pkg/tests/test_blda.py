import numpy as np
import pytest

from erpspeller.core import blda, config
from erpspeller.core.errors import ClassifierError, ValidationError


def with_bias(features):
    return np.hstack([features, np.ones((len(features), 1))])


def random_problem(seed, n=50, d=480):
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    y[:2] = (-1.0, 1.0)
    return with_bias(rng.standard_normal((n, d))), y


def separable_problem(seed, n=300, d=20, shift=1.0):
    rng = np.random.default_rng(seed)
    y = np.where(np.arange(n) % 6 < 1, 1.0, -1.0)
    features = rng.standard_normal((n, d)) + shift * y[:, None] * np.linspace(0.2, 1.0, d)[None, :]
    return with_bias(features), y


class TestFrozenHyperparameters:
    @pytest.mark.parametrize("seed", range(5))
    def test_equals_closed_form_ridge(self, seed):
        X, y = random_problem(seed)
        model = blda.train(X, y, update_hyperparameters=False, regularize_bias=True)
        expected = np.linalg.solve(X.T @ X + np.eye(X.shape[1]), X.T @ y)
        assert np.linalg.norm(model.weights - expected) <= 1e-8 * np.linalg.norm(expected)
        assert (model.alpha, model.beta) == (1.0, 1.0)
        assert model.n_iterations == 0
        assert len(model.evidence_trace) == 1

    @pytest.mark.parametrize("seed", range(3))
    def test_unpenalised_bias_equals_intercept_ridge(self, seed):
        X, y = random_problem(seed)
        penalty = np.eye(X.shape[1])
        penalty[-1, -1] = 0.0
        expected = np.linalg.solve(X.T @ X + penalty, X.T @ y)
        model = blda.train(X, y, update_hyperparameters=False)
        assert np.linalg.norm(model.weights - expected) <= 1e-8 * np.linalg.norm(expected)


class TestEvidenceMaximisation:
    def test_evidence_never_decreases(self):
        for seed in range(100):
            X, y = separable_problem(seed, n=120, d=15, shift=0.3)
            model = blda.train(X, y)
            assert np.all(np.diff(model.evidence_trace) >= -1e-8), seed
            assert model.alpha > 0 and model.beta > 0
            assert np.all(np.isfinite(model.weights))

    def test_converges_within_cap(self):
        X, y = separable_problem(1)
        model = blda.train(X, y)
        assert model.converged
        assert model.n_iterations <= config.BLDA_MAX_ITERATIONS
        assert len(model.evidence_trace) == model.n_iterations + 1

    def test_separable_clouds(self):
        rng = np.random.default_rng(0)
        y = np.repeat([1.0, -1.0], 50)
        features = rng.normal(0.0, 0.3, (100, 2)) + 3.0 * y[:, None]
        X = with_bias(features)
        model = blda.train(X, y)
        assert np.all(np.sign(blda.score(model, X)) == y)

    def test_label_sign_flips_weights(self):
        X, y = separable_problem(2)
        np.testing.assert_allclose(blda.train(X, -y).weights, -blda.train(X, y).weights, rtol=1e-9, atol=1e-12)

    def test_feature_scale_keeps_the_winner(self):
        X, y = separable_problem(3, shift=0.5)
        scaled = X.copy()
        scaled[:, :-1] *= 10.0
        held_out, _ = separable_problem(4, shift=0.5)
        held_scaled = held_out.copy()
        held_scaled[:, :-1] *= 10.0
        model = blda.train(X, y, tolerance=1e-10, max_iterations=1000)
        scaled_model = blda.train(scaled, y, tolerance=1e-10, max_iterations=1000)
        for block in range(0, 300, 12):
            a = blda.score(model, held_out[block:block + 12])
            b = blda.score(scaled_model, held_scaled[block:block + 12])
            assert np.argmax(a) == np.argmax(b)

    def test_balanced_classes(self):
        X, y = separable_problem(5)
        model = blda.train(X, y, balance_classes=True)
        assert model.metadata["balance_classes"] is True
        assert model.metadata["n_target"] == 50
        assert np.mean(np.sign(blda.score(model, X)) == y) > 0.9


class TestTrainingErrors:
    def test_single_class(self):
        X, _ = random_problem(0)
        with pytest.raises(ValidationError, match="single class"):
            blda.train(X, np.ones(len(X)))

    def test_labels_must_be_signed(self):
        X, y = random_problem(0)
        with pytest.raises(ValidationError, match="-1 or \\+1"):
            blda.train(X, (y + 1) / 2)

    def test_bias_column_required(self):
        X, y = random_problem(0)
        with pytest.raises(ValidationError, match="bias column"):
            blda.train(X[:, :-1], y)

    def test_shape_mismatch(self):
        X, y = random_problem(0)
        with pytest.raises(ValidationError):
            blda.train(X, y[:-1])

    def test_non_finite(self):
        X, y = random_problem(0)
        X[3, 4] = np.inf
        with pytest.raises(ValidationError, match="non-finite"):
            blda.train(X, y)

    def test_constant_features(self):
        X = with_bias(np.full((40, 10), 2.5))
        y = np.where(np.arange(40) % 2 == 0, 1.0, -1.0)
        with pytest.raises(ClassifierError, match="constant"):
            blda.train(X, y)


class TestScore:
    @pytest.fixture
    def model(self):
        X, y = separable_problem(6)
        return blda.train(X, y)

    def test_bias_only(self, model):
        x = np.zeros(model.n_features)
        x[-1] = 1.0
        assert blda.score(model, x) == pytest.approx(model.bias)

    def test_linear(self, model):
        rng = np.random.default_rng(7)
        x1, x2 = with_bias(rng.standard_normal((2, 20)))
        bias_only = np.zeros(21)
        bias_only[-1] = 1.0
        combined = x1 + x2
        combined[-1] = 1.0
        base = blda.score(model, bias_only)
        assert blda.score(model, combined) - base == pytest.approx(
            (blda.score(model, x1) - base) + (blda.score(model, x2) - base))

    def test_matrix_input(self, model):
        X, _ = separable_problem(8)
        scores = blda.score(model, X)
        assert scores.shape == (300,)
        assert scores[0] == pytest.approx(blda.score(model, X[0]))

    def test_wrong_dimension(self, model):
        with pytest.raises(ValidationError, match="feature length"):
            blda.score(model, np.ones(20))
