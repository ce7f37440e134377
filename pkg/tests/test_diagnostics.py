"""Drift curves, variance-inflation checks, distribution metrics, ablation grids."""

import numpy as np
import pytest

from driftlab import (
    AnalyticCorrection,
    FrechetStats,
    IsotropicGaussianMixture,
    MixtureScore,
    SamplerConfig,
    ablate,
    epsilon_norm_sampling,
    epsilon_norm_training,
    frechet_distance,
    linear_beta_schedule,
    perturb_mixture,
    power_sigma_grid,
    predicted_reverse_variance,
    ring_mixture,
    sliced_wasserstein,
    variance_inflation_check,
)


def gaussian_stats(mean, var):
    return FrechetStats(mean=np.atleast_1d(mean), covariance=np.atleast_2d(var))


class TestFrechetDistance:
    def test_identical_stats_zero(self):
        s = gaussian_stats(0.3, 1.7)
        assert frechet_distance(s, s) == 0.0

    def test_pure_mean_shift(self):
        a = gaussian_stats(0.0, 1.0)
        b = gaussian_stats(1.0, 1.0)
        assert frechet_distance(a, b) == pytest.approx(1.0, rel=1e-10)

    def test_pure_variance_gap(self):
        a = gaussian_stats(0.0, 1.0)
        b = gaussian_stats(0.0, 4.0)
        # FD^2 = 1 + 4 - 2*2 = 1
        assert frechet_distance(a, b) == pytest.approx(1.0, rel=1e-10)

    def test_symmetry(self):
        a = FrechetStats(mean=[0.0, 1.0], covariance=[[2.0, 0.3], [0.3, 1.0]])
        b = FrechetStats(mean=[1.0, -1.0], covariance=[[1.0, -0.2], [-0.2, 3.0]])
        assert frechet_distance(a, b) == pytest.approx(frechet_distance(b, a), rel=1e-12)

    def test_rejects_asymmetric_covariance(self):
        with pytest.raises(ValueError):
            FrechetStats(mean=[0.0, 0.0], covariance=[[1.0, 0.5], [0.0, 1.0]])

    def test_rejects_negative_eigenvalue(self):
        with pytest.raises(ValueError):
            FrechetStats(mean=[0.0], covariance=[[-0.5]])

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(ValueError):
            frechet_distance(gaussian_stats(0.0, 1.0), FrechetStats(mean=[0.0, 0.0], covariance=np.eye(2)))

    def test_from_samples_matches_numpy(self):
        xs = np.random.default_rng(3).normal(size=(200, 2))
        stats = FrechetStats.from_samples(xs)
        np.testing.assert_allclose(stats.mean, xs.mean(axis=0))
        np.testing.assert_allclose(stats.covariance, np.cov(xs, rowvar=False), atol=1e-12)

    def test_of_mixture_uses_analytic_moments(self):
        mix = ring_mixture()
        stats = FrechetStats.of_mixture(mix)
        np.testing.assert_allclose(stats.covariance, mix.covariance())


class TestSlicedWasserstein:
    def test_identical_sets_zero(self):
        xs = np.random.default_rng(0).normal(size=(100, 3))
        assert sliced_wasserstein(xs, xs, n_projections=16, seed=0) == 0.0

    def test_one_d_translation_is_exact(self):
        xs = np.random.default_rng(1).normal(size=(500, 1))
        c = 0.73
        assert sliced_wasserstein(xs, xs + c, n_projections=8, seed=2) == pytest.approx(c, rel=1e-10)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=(80, 2)), rng.normal(size=(80, 2)) + 0.5
        assert sliced_wasserstein(a, b, seed=5) == pytest.approx(sliced_wasserstein(b, a, seed=5), rel=1e-12)

    def test_unequal_sizes_supported(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=(60, 1)), rng.normal(size=(90, 1))
        assert sliced_wasserstein(a, b, seed=1) >= 0.0

    def test_rejects_bad_projection_count(self):
        xs = np.zeros((4, 1))
        with pytest.raises(ValueError):
            sliced_wasserstein(xs, xs, n_projections=0)


class TestVarianceInflation:
    def test_error_free_prediction_collapses(self):
        pred, inflation = predicted_reverse_variance(0.7, 0.05, 0.0)
        assert inflation == 0.0
        assert pred == pytest.approx(1.0 - 0.7)

    def test_hand_evaluated_inflation_term(self):
        _, inflation = predicted_reverse_variance(0.9, 0.2, 0.1)
        # (sqrt(0.9)*0.2/0.28*0.1)^2 = 9/1960
        assert inflation == pytest.approx(0.0045918367346938775, rel=1e-13)

    def test_doubling_error_quadruples_inflation(self):
        _, base = predicted_reverse_variance(0.85, 0.1, 0.2)
        _, big = predicted_reverse_variance(0.85, 0.1, 0.4)
        assert big == pytest.approx(4.0 * base, rel=1e-12)

    def test_monte_carlo_agrees_with_prediction(self):
        sched = linear_beta_schedule(20, 0.01, 0.2)
        for t, e in [(5, 0.0), (10, 0.2), (19, 0.3)]:
            empirical, predicted = variance_inflation_check(sched, t, e, n=100_000, seed=0)
            se = predicted * np.sqrt(2.0 / (100_000 - 1))
            assert abs(empirical - predicted) < 3.0 * se

    def test_rejects_bad_inputs(self):
        sched = linear_beta_schedule(10, 0.01, 0.1)
        with pytest.raises(IndexError):
            variance_inflation_check(sched, 10, 0.1)  # t+1 out of range
        with pytest.raises(ValueError):
            variance_inflation_check(sched, 5, -0.1)


class TestTrainingCurve:
    def test_chi_means_on_point_mass_world(self):
        for d, expected in ((2, np.sqrt(np.pi / 2.0)), (1, np.sqrt(2.0 / np.pi))):
            world = IsotropicGaussianMixture(
                weights=[1.0], means=[np.zeros(d)], variances=[1e-12]
            )
            means, errs = epsilon_norm_training(
                MixtureScore(world), world, [0.1, 1.0, 10.0], n=20_000, seed=4
            )
            assert np.all(np.abs(means - expected) < 3.0 * errs)

    def test_single_sample_reproducible(self):
        world = ring_mixture()
        a = epsilon_norm_training(MixtureScore(world), world, [0.5], n=1, seed=9)
        b = epsilon_norm_training(MixtureScore(world), world, [0.5], n=1, seed=9)
        assert a[0][0] == b[0][0]
        assert a[1][0] == 0.0  # no spread estimate from one draw

    def test_accepts_continuous_grid_object(self):
        world = ring_mixture()
        grid = power_sigma_grid(6)
        means, _ = epsilon_norm_training(MixtureScore(world), world, grid, n=50, seed=0)
        assert means.size == 6


class TestDriftCurves:
    def _variants(self, field, steps=8, seed=3, **overrides):
        cfg = SamplerConfig(kind="pf_euler", steps=steps, batch=256, seed=seed, **overrides)
        return {"baseline": (cfg, field, None)}

    def test_zero_model_error_curves_coincide(self):
        # needs a solver whose discretization transport error sits below the
        # Monte-Carlo bars; the second-order solver achieves that at the
        # 21-step protocol (first-order solvers at this grid do not)
        world = ring_mixture()
        field = MixtureScore(world)
        cfg = SamplerConfig(kind="pf_heun", steps=21, batch=2000, seed=3)
        curve = epsilon_norm_sampling(
            {"baseline": (cfg, field, None)}, field, world, training_n=2000, training_seed=1
        )
        gap = np.abs(curve.gap("baseline"))
        tol = 4.0 * curve.combined_stderr("baseline")
        assert np.all(gap <= tol)

    def test_variants_must_share_grid(self):
        world = ring_mixture()
        field = MixtureScore(world)
        a = SamplerConfig(kind="pf_euler", steps=8, batch=16, seed=0)
        b = SamplerConfig(kind="pf_euler", steps=9, batch=16, seed=0)
        with pytest.raises(ValueError):
            epsilon_norm_sampling(
                {"a": (a, field, None), "b": (b, field, None)}, field, world
            )

    def test_row_layout(self):
        world = ring_mixture()
        field = MixtureScore(world)
        curve = epsilon_norm_sampling(
            self._variants(field, steps=5), field, world, training_n=100, training_seed=1
        )
        rows = curve.to_rows()
        assert len(rows) == 10  # 5 training rows + 5 baseline rows
        assert {r[2] for r in rows} == {"training", "baseline"}
        from driftlab import NORM_AGGREGATION

        assert curve.metadata["norm_aggregation"] == NORM_AGGREGATION


class TestAblate:
    def _setup(self):
        real = ring_mixture(n_components=4, radius=2.0, component_std=0.4)
        model = perturb_mixture(real, mean_shift=0.2, variance_scale=1.1, seed=5)
        template = SamplerConfig(kind="pf_euler", steps=8, batch=64, seed=0)
        return real, model, template

    def test_identity_cell_matches_smaller_grid(self):
        real, model, template = self._setup()
        corr = AnalyticCorrection(real, model)
        kw = dict(
            template=template, score=MixtureScore(model), correction=corr,
            real_mixture=real, n_per_cell=128, repeats=2, seed=7,
        )
        wide = ablate(w_values=[0.0, 1.0], b_values=[1.0, 1.01], **kw)
        narrow = ablate(w_values=[0.0], b_values=[1.0], **kw)
        assert wide.cell("fd", 0.0, 1.0) == narrow.cell("fd", 0.0, 1.0)
        assert wide.cell("sw", 0.0, 1.0) == narrow.cell("sw", 0.0, 1.0)

    def test_same_seed_identical_grid(self):
        real, model, template = self._setup()
        kw = dict(
            template=template, score=MixtureScore(model), correction=None,
            real_mixture=real, w_values=[0.0], b_values=[1.0, 1.02],
            n_per_cell=64, repeats=2, seed=3,
        )
        a = ablate(**kw)
        b = ablate(**kw)
        for metric in ("fd", "sw"):
            np.testing.assert_array_equal(a.values[metric], b.values[metric])

    def test_diverging_cell_marked_failed_not_dropped(self):
        real, model, template = self._setup()
        blowup = lambda x, sigma: np.full_like(x, 1e10)
        grid = ablate(
            template=template, score=MixtureScore(model), correction=blowup,
            real_mixture=real, w_values=[0.0, 1.0], b_values=[1.0],
            n_per_cell=32, repeats=1, seed=0,
        )
        assert grid.status[0, 0] == "ok"
        assert grid.status[1, 0] == "failed"
        rows = grid.to_rows()
        assert len(rows) == 4  # 2 cells x 2 metrics, failures included
        assert grid.argmin("fd") == (0.0, 1.0)  # failed cells never win

    def test_grid_completeness(self):
        real, model, template = self._setup()
        grid = ablate(
            template=template, score=MixtureScore(model), correction=None,
            real_mixture=real, w_values=[0.0, 0.5, 1.0], b_values=[1.0, 1.01],
            n_per_cell=32, repeats=1, seed=1, metrics=("fd",),
        )
        assert grid.values["fd"].shape == (3, 2)
        assert len(grid.to_rows()) == 6

    def test_rejects_empty_axes(self):
        real, model, template = self._setup()
        with pytest.raises(ValueError):
            ablate(
                template=template, score=MixtureScore(model), correction=None,
                real_mixture=real, w_values=[], b_values=[1.0],
            )
