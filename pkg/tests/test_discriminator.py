"""Classifier training, logit-gradient corrections, and serialization."""

import warnings

import numpy as np
import pytest
from scipy.special import expit

from driftlab import (
    DiscriminatorCorrection,
    IsotropicGaussianMixture,
    Mlp,
    SaturationWarning,
    TrainConfig,
    TrainingDivergedError,
    analytic_correction,
    correction_quality,
    features_for,
    load_mlp,
    log_uniform_levels,
    logit_ratio_correction,
    loss_and_gradients,
    perturb_mixture,
    save_mlp,
    train,
    two_gaussian_mixture,
)


def point_gaussian(mean: float, var: float = 1.0) -> IsotropicGaussianMixture:
    return IsotropicGaussianMixture(weights=[1.0], means=[[mean]], variances=[var])


def linear_logit_mlp(a: np.ndarray) -> Mlp:
    """No hidden layers: logit(features) = a . features."""
    return Mlp(weights=[np.asarray(a, dtype=np.float64)[:, None]], biases=[np.zeros(1)])


class TestLogitCorrection:
    def test_linear_network_constant_gradient(self):
        a = np.array([0.7, -1.2, 0.3])  # (x0, x1, log sigma) coefficients
        mlp = linear_logit_mlp(a)
        for x in (np.array([0.0, 0.0]), np.array([5.0, -2.0])):
            np.testing.assert_allclose(logit_ratio_correction(mlp, x, 0.5), a[:2], rtol=1e-15)

    def test_zero_network_zero_correction(self):
        mlp = Mlp.initialize(3, hidden=(8,), seed=0)
        mlp.weights = [np.zeros_like(w) for w in mlp.weights]
        x = np.random.default_rng(0).normal(size=(10, 2))
        np.testing.assert_array_equal(logit_ratio_correction(mlp, x, 1.0), np.zeros((10, 2)))

    def test_log_odds_gradient_equals_logit_gradient(self):
        # grad log(d/(1-d)) computed through the sigmoid must agree with the
        # direct logit gradient on a generic network
        mlp = Mlp.initialize(3, hidden=(8, 8), seed=4)
        x = np.array([[0.3, -0.9]])
        sigma = 0.7
        h = 1e-6
        grad = logit_ratio_correction(mlp, x, sigma)[0]
        for j in range(2):
            xp, xm = x.copy(), x.copy()
            xp[0, j] += h
            xm[0, j] -= h
            dp = float(expit(mlp.logits(features_for(xp, sigma)))[0])
            dm = float(expit(mlp.logits(features_for(xm, sigma)))[0])
            fd = (np.log(dp / (1.0 - dp)) - np.log(dm / (1.0 - dm))) / (2.0 * h)
            assert grad[j] == pytest.approx(fd, rel=1e-5)

    @pytest.mark.parametrize("hidden", [(8,), (16, 8), (8, 8, 8)])
    def test_input_gradients_match_finite_differences(self, hidden):
        mlp = Mlp.initialize(4, hidden=hidden, seed=11)
        rng = np.random.default_rng(11)
        x = rng.normal(size=(5, 3))
        sigma = 0.9
        grads = logit_ratio_correction(mlp, x, sigma)
        h = 1e-5
        fd = np.empty_like(grads)
        for i in range(x.shape[0]):
            for j in range(x.shape[1]):
                xp, xm = x.copy(), x.copy()
                xp[i, j] += h
                xm[i, j] -= h
                fd[i, j] = (
                    mlp.logits(features_for(xp, sigma))[i]
                    - mlp.logits(features_for(xm, sigma))[i]
                ) / (2.0 * h)
        assert np.linalg.norm(grads - fd) / np.linalg.norm(fd) < 1e-4

    def test_parameter_gradients_match_finite_differences(self):
        mlp = Mlp.initialize(3, hidden=(6, 4), seed=2)
        rng = np.random.default_rng(2)
        feats = rng.normal(size=(12, 3))
        labels = (rng.random(12) > 0.5).astype(float)
        loss, gw, gb = loss_and_gradients(mlp, feats, labels)
        h = 1e-6
        for layer in range(len(mlp.weights)):
            i, j = 0, 0
            w0 = mlp.weights[layer][i, j]
            mlp.weights[layer][i, j] = w0 + h
            lp = loss_and_gradients(mlp, feats, labels)[0]
            mlp.weights[layer][i, j] = w0 - h
            lm = loss_and_gradients(mlp, feats, labels)[0]
            mlp.weights[layer][i, j] = w0
            assert gw[layer][i, j] == pytest.approx((lp - lm) / (2.0 * h), rel=1e-4, abs=1e-10)
            b0 = mlp.biases[layer][0]
            mlp.biases[layer][0] = b0 + h
            lp = loss_and_gradients(mlp, feats, labels)[0]
            mlp.biases[layer][0] = b0 - h
            lm = loss_and_gradients(mlp, feats, labels)[0]
            mlp.biases[layer][0] = b0
            assert gb[layer][0] == pytest.approx((lp - lm) / (2.0 * h), rel=1e-4, abs=1e-10)

    def test_features_require_positive_sigma(self):
        with pytest.raises(ValueError):
            features_for(np.zeros((1, 2)), 0.0)

    def test_feature_layout(self):
        feats = features_for(np.ones((3, 2)), 2.0)
        assert feats.shape == (3, 3)
        np.testing.assert_allclose(feats[:, 2], np.log(2.0))


class TestTraining:
    def test_separable_classes_high_accuracy(self):
        cfg = TrainConfig(
            learning_rate=0.1, epochs=10, batch_size=128, batches_per_epoch=20,
            noise_levels=(0.1, 0.5, 1.0), seed=0,
        )
        mlp = train(point_gaussian(10.0), point_gaussian(-10.0), config=cfg)
        assert mlp.log.holdout_accuracy > 0.99
        assert mlp.log.epoch_losses[-1] <= mlp.log.epoch_losses[0]

    def test_identical_sources_near_zero_logits(self):
        cfg = TrainConfig(
            learning_rate=0.05, epochs=10, batch_size=128, batches_per_epoch=20,
            noise_levels=(0.2, 1.0), seed=1,
        )
        mlp = train(point_gaussian(0.0), point_gaussian(0.0), config=cfg)
        assert mlp.log.mean_abs_logit <= 0.1

    def test_fixed_seed_reproduces_weights(self):
        cfg = TrainConfig(
            learning_rate=0.05, epochs=2, batch_size=32, batches_per_epoch=5,
            noise_levels=(0.5,), seed=7,
        )
        a = train(point_gaussian(1.0), point_gaussian(-1.0), config=cfg)
        b = train(point_gaussian(1.0), point_gaussian(-1.0), config=cfg)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)
        for ba, bb in zip(a.biases, b.biases):
            np.testing.assert_array_equal(ba, bb)

    def test_sample_store_sources_accepted(self):
        rng = np.random.default_rng(0)
        real = rng.normal(loc=2.0, size=(500, 1))
        fake = rng.normal(loc=-2.0, size=(500, 1))
        cfg = TrainConfig(
            learning_rate=0.1, epochs=3, batch_size=64, batches_per_epoch=10,
            noise_levels=(0.3,), seed=3,
        )
        mlp = train(real, fake, config=cfg)
        assert mlp.log.holdout_accuracy > 0.9

    def test_divergence_signalled_on_non_finite_loss(self):
        bad = np.array([[np.nan], [1.0]])
        cfg = TrainConfig(epochs=1, batches_per_epoch=2, batch_size=8, noise_levels=(0.5,))
        with np.errstate(invalid="ignore"):
            with pytest.raises(TrainingDivergedError):
                train(bad, np.array([[0.0]]), config=cfg)

    def test_saturation_warning_on_overconfident_classifier(self):
        cfg = TrainConfig(
            learning_rate=0.5, epochs=30, batch_size=128, batches_per_epoch=20,
            noise_levels=(0.01,), seed=2,
        )
        with pytest.warns(SaturationWarning):
            train(point_gaussian(50.0, 0.01), point_gaussian(-50.0, 0.01), config=cfg)

    def test_dimension_mismatch_rejected(self):
        from driftlab import ring_mixture

        with pytest.raises(ValueError):
            train(point_gaussian(0.0), ring_mixture(), config=TrainConfig(epochs=1))

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"learning_rate": 0.0},
            {"epochs": 0},
            {"batch_size": 0},
            {"noise_levels": ()},
            {"noise_levels": (0.5, -1.0)},
            {"momentum": 1.0},
            {"batches_per_epoch": 0},
        ],
    )
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestCorrectionQuality:
    def test_zero_estimate_scores_one(self):
        real = two_gaussian_mixture()
        model = perturb_mixture(real, mean_shift=0.5, variance_scale=1.0, seed=0)
        mlp = Mlp.initialize(2, hidden=(4,), seed=0)
        mlp.weights = [np.zeros_like(w) for w in mlp.weights]
        pts = np.linspace(-2.0, 2.0, 50)[:, None]
        assert correction_quality(mlp, real, model, 0.5, pts) == pytest.approx(1.0)

    def test_identical_mixtures_use_absolute_error(self):
        real = two_gaussian_mixture()
        mlp = Mlp.initialize(2, hidden=(4,), seed=0)
        mlp.weights = [np.zeros_like(w) for w in mlp.weights]
        pts = np.linspace(-2.0, 2.0, 20)[:, None]
        assert correction_quality(mlp, real, real, 0.5, pts) == 0.0

    def test_perfect_linear_estimator_scores_zero(self):
        # shifted unit Gaussians have a constant true correction, which a
        # linear-logit network expresses exactly
        real = point_gaussian(1.0)
        model = point_gaussian(-1.0)
        true_val = analytic_correction(real, model, 1.0, np.array([0.0]))[0]
        mlp = linear_logit_mlp(np.array([true_val, 0.0]))
        pts = np.linspace(-3.0, 3.0, 40)[:, None]
        assert correction_quality(mlp, real, model, 1.0, pts) < 1e-12


class TestSerialization:
    def test_roundtrip_exact(self, tmp_path):
        cfg = TrainConfig(epochs=1, batches_per_epoch=3, batch_size=16, noise_levels=(0.5,), seed=5)
        mlp = train(point_gaussian(1.0), point_gaussian(-1.0), config=cfg)
        path = tmp_path / "weights.json"
        save_mlp(mlp, path)
        back = load_mlp(path)
        assert back.layer_dims == mlp.layer_dims
        for wa, wb in zip(mlp.weights, back.weights):
            np.testing.assert_array_equal(wa, wb)
        x = np.random.default_rng(0).normal(size=(6, 1))
        np.testing.assert_array_equal(
            logit_ratio_correction(back, x, 0.5), logit_ratio_correction(mlp, x, 0.5)
        )

    def test_header_mismatch_rejected(self, tmp_path):
        import json

        mlp = Mlp.initialize(2, hidden=(4,), seed=0)
        path = tmp_path / "weights.json"
        save_mlp(mlp, path)
        payload = json.loads(path.read_text())
        payload["layer_dims"][0] = 99
        path.write_text(json.dumps(payload))
        with pytest.raises(ValueError):
            load_mlp(path)

    def test_save_creates_parent_directories(self, tmp_path):
        mlp = Mlp.initialize(2, hidden=(4,), seed=0)
        path = tmp_path / "deep" / "nested" / "weights.json"
        save_mlp(mlp, path)
        assert path.exists()


class TestDiscriminatorCorrection:
    def test_wraps_logit_gradient(self):
        mlp = Mlp.initialize(3, hidden=(6,), seed=1)
        provider = DiscriminatorCorrection(mlp)
        assert provider.dim == 2
        x = np.random.default_rng(1).normal(size=(4, 2))
        np.testing.assert_array_equal(provider(x, 0.8), logit_ratio_correction(mlp, x, 0.8))


class TestNoiseLevels:
    def test_geometric_spacing(self):
        levels = log_uniform_levels(0.01, 10.0, 7)
        assert len(levels) == 7
        assert levels[0] == pytest.approx(0.01)
        assert levels[-1] == pytest.approx(10.0)
        ratios = np.diff(np.log(np.asarray(levels)))
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-10)

    def test_validation(self):
        with pytest.raises(ValueError):
            log_uniform_levels(1.0, 0.5)
        with pytest.raises(ValueError):
            log_uniform_levels(0.0, 1.0)
