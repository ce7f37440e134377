"""Desk-scale acceptance gate: one test per headline capability.

Each test stands alone, states its tolerance inline, and ends with a single
printed PASS line; the pytest verdict per test is the pass/fail record.  The
statistical tests run on frozen seeds so reruns are exact.
"""

from dataclasses import replace

import numpy as np

from driftlab.cli import main
from driftlab.diagnostics import (
    FrechetStats,
    ablate,
    epsilon_norm_sampling,
    frechet_distance,
    sliced_wasserstein,
)
from driftlab.discriminator import DiscriminatorCorrection, TrainConfig, train
from driftlab.samplers import SamplerConfig, ScalingSchedule, sample
from driftlab.verification import (
    _fd_input_gradients,
    check_guidance_exactness,
    check_reduction,
    check_solver_order,
    check_table1_variance,
)
from driftlab.worlds import (
    AnalyticCorrection,
    IsotropicGaussianMixture,
    MixtureScore,
    perturb_mixture,
    ring_mixture,
    sample_mixture,
    two_gaussian_mixture,
)


def _drift_gap(kind: str, real, model, *, steps=21, batch=40_000, seed=11,
               training_n=40_000, training_seed=1):
    """Sampling-minus-training mean eps-norm curve for one unguided solver."""
    field = MixtureScore(model)
    cfg = SamplerConfig(kind=kind, steps=steps, batch=batch, seed=seed)
    curve = epsilon_norm_sampling(
        {"run": (cfg, field, None)},
        training_field=field,
        world_mixture=real,
        training_n=training_n,
        training_seed=training_seed,
    )
    return curve.gap("run"), curve.combined_stderr("run")


def test_criterion_1_reduction_invariant():
    """w = 0, lambda = 1 must be bit-identical to the unguided path, all solvers."""
    result = check_reduction()
    assert result.passed, result.detail
    print(f"criterion 1 (reduction invariant): PASS - {result.detail}")


def test_criterion_2_one_step_variance_formula():
    """Empirical Var(x_t) within 3 SE of the closed form at n = 1e5, 6 pairs."""
    result = check_table1_variance(n=100_000)
    assert result.passed, result.detail
    print(f"criterion 2 (one-step variance formula): PASS - {result.detail}")


def test_criterion_3_exposure_bias_sign():
    """21-step Euler on the perturbed ring: sampling eps-norm beats training by
    > 2 combined SE at the 5 smallest sigma levels; Heun keeps the sign with a
    smaller gap."""
    real = ring_mixture(8, 4.0, 0.3)
    model = perturb_mixture(real, mean_shift=0.02, variance_scale=1.0, seed=17)

    euler_gap, euler_se = _drift_gap("pf_euler", real, model)
    z = euler_gap[-5:] / euler_se[-5:]
    assert np.all(z > 2.0), f"Euler z-scores at 5 smallest sigmas: {z}"

    heun_gap, _ = _drift_gap("pf_heun", real, model)
    assert np.all(heun_gap[-5:] > 0.0), f"Heun gaps at 5 smallest sigmas: {heun_gap[-5:]}"
    euler_mean = float(np.mean(euler_gap[-5:]))
    heun_mean = float(np.mean(heun_gap[-5:]))
    assert heun_mean < euler_mean
    print(
        "criterion 3 (exposure-bias sign): PASS - Euler min z "
        f"{float(np.min(z)):.1f} > 2, Heun gap {heun_mean:.5f} < Euler {euler_mean:.5f}"
    )


def test_criterion_4_epsilon_scaling_efficacy():
    """Some b in (1.0, 1.05] shrinks the eps-norm gap at >= 80% of steps and
    improves both distribution metrics beyond Monte-Carlo error."""
    real = IsotropicGaussianMixture(weights=[1.0], means=[[0.0, 0.0]], variances=[4.0])
    model = perturb_mixture(real, mean_shift=0.02, variance_scale=0.85, seed=17)
    field = MixtureScore(model)
    base_cfg = SamplerConfig(
        kind="ancestral", steps=60, batch=20_000, seed=11,
        beta_start=1e-4, beta_end=0.145,
    )
    sweep = (1.0125, 1.025, 1.0375, 1.05)

    variants = {"b=1": (base_cfg, field, None)}
    for b in sweep:
        cfg = replace(base_cfg, scaling=ScalingSchedule(k=0.0, b=b))
        variants[f"b={b}"] = (cfg, field, None)
    curve = epsilon_norm_sampling(
        variants, training_field=field, world_mixture=real,
        training_n=20_000, training_seed=1,
    )
    gap_unscaled = np.abs(curve.gap("b=1"))
    shrink = {
        b: float(np.mean(np.abs(curve.gap(f"b={b}")) < gap_unscaled)) for b in sweep
    }

    target = FrechetStats.of_mixture(real)
    repeats = 4

    def metrics(b: float, rep: int) -> tuple[float, float]:
        seed = 1000 + 7 * rep
        scaling = ScalingSchedule(k=0.0, b=b)
        cfg = replace(base_cfg, batch=8000, seed=seed, scaling=scaling)
        x, _ = sample(cfg, field)
        fd = frechet_distance(FrechetStats.from_samples(x), target)
        ref = sample_mixture(real, 8000, seed + 7)
        sw = sliced_wasserstein(x, ref, n_projections=64, seed=seed)
        return fd, sw

    base_runs = [metrics(1.0, r) for r in range(repeats)]
    qualifying = []
    for b in sweep:
        scaled_runs = [metrics(b, r) for r in range(repeats)]
        # paired per-repeat differences share seeds, so solver noise cancels
        fd_diff = np.array([br[0] - sr[0] for br, sr in zip(base_runs, scaled_runs)])
        sw_diff = np.array([br[1] - sr[1] for br, sr in zip(base_runs, scaled_runs)])
        fd_se = float(np.std(fd_diff, ddof=1) / np.sqrt(repeats))
        sw_se = float(np.std(sw_diff, ddof=1) / np.sqrt(repeats))
        fd_ok = float(np.mean(fd_diff)) > 2.0 * fd_se
        sw_ok = float(np.mean(sw_diff)) > 2.0 * sw_se
        if shrink[b] >= 0.8 and fd_ok and sw_ok:
            qualifying.append((b, shrink[b], float(np.mean(fd_diff)), float(np.mean(sw_diff))))

    assert qualifying, f"no b in {sweep} satisfied both conditions; shrink={shrink}"
    b, frac, fd_gain, sw_gain = qualifying[-1]
    print(
        "criterion 4 (epsilon-scaling efficacy): PASS - "
        f"b={b}: gap shrinks at {frac:.1%} of steps, FD -{fd_gain:.4f}, SW -{sw_gain:.4f}"
    )


def test_criterion_5_guidance_exactness():
    """Analytic correction at w = 1 reproduces true-score trajectories to 1e-10."""
    result = check_guidance_exactness()
    assert result.passed, result.detail
    print(f"criterion 5 (guidance exactness): PASS - {result.detail}")


def test_criterion_6_discriminator_fidelity():
    """Trained discriminator correction within 0.2 mean relative L2 of the
    analytic density-ratio gradient; input gradients match FD to 1e-4."""
    real = two_gaussian_mixture()
    model = perturb_mixture(real, mean_shift=0.4, variance_scale=1.4, seed=17)
    mlp = train(
        real,
        model,
        config=TrainConfig(
            learning_rate=0.05,
            epochs=150,
            batch_size=1024,
            batches_per_epoch=50,
            momentum=0.9,
            noise_levels=(0.1, 0.5, 1.0),
            seed=0,
        ),
    )
    estimated = DiscriminatorCorrection(mlp)
    exact = AnalyticCorrection(real, model)

    rng = np.random.default_rng(123)
    rel_errors = []
    for i, sigma in enumerate((0.1, 0.5, 1.0)):
        x0 = sample_mixture(real, 1000, 123 + i)
        x = x0 + sigma * rng.standard_normal(x0.shape)
        est = estimated(x, sigma)
        true = exact(x, sigma)
        rel_errors.append(float(np.linalg.norm(est - true) / np.linalg.norm(true)))
    mean_rel = float(np.mean(rel_errors))
    assert mean_rel <= 0.2, f"per-sigma relative errors {rel_errors}"

    x_fd = sample_mixture(real, 5, 7) + 0.5 * np.random.default_rng(7).standard_normal((5, 1))
    from driftlab.discriminator import logit_ratio_correction

    grads = logit_ratio_correction(mlp, x_fd, 0.5)
    fd = _fd_input_gradients(mlp, x_fd, 0.5)
    rel_fd = float(np.linalg.norm(grads - fd) / np.linalg.norm(fd))
    assert rel_fd <= 1e-4

    print(
        "criterion 6 (discriminator fidelity): PASS - "
        f"mean relative L2 {mean_rel:.3f} <= 0.2, input-gradient FD error {rel_fd:.2e}"
    )


def test_criterion_7_solver_order():
    """Terminal-error slopes: Euler -1 +- 0.3, Heun -2 +- 0.3."""
    result = check_solver_order()
    assert result.passed, result.detail
    print(f"criterion 7 (solver order): PASS - {result.detail}")


def test_criterion_8_combined_techniques_beat_singles():
    """On the 16-cell (w, b) grid the minimizing cell beats the baseline and
    the best single-technique cell of each metric beyond Monte-Carlo error."""
    real = IsotropicGaussianMixture(weights=[1.0], means=[[0.0, 0.0]], variances=[4.0])
    model = perturb_mixture(real, mean_shift=0.4, variance_scale=0.85, seed=17)
    template = SamplerConfig(
        kind="ancestral", steps=60, seed=0, beta_start=1e-4, beta_end=0.145
    )
    w_values = (0.0, 1.0, 1.67, 2.0)
    b_values = (1.0, 1.0004, 1.01, 1.035)
    grid = ablate(
        template,
        MixtureScore(model),
        AnalyticCorrection(real, model),
        real,
        w_values=w_values,
        b_values=b_values,
        metrics=("fd", "sw"),
        n_per_cell=4096,
        repeats=6,
        seed=0,
    )

    details = []
    for metric in ("fd", "sw"):
        w_best, b_best = grid.argmin(metric)
        best, best_se = grid.cell(metric, w_best, b_best)
        base, base_se = grid.cell(metric, 0.0, 1.0)

        es_only = min(grid.cell(metric, 0.0, b) for b in b_values if b != 1.0)
        dg_only = min(grid.cell(metric, w, 1.0) for w in w_values if w != 0.0)

        for rival, rival_se in (
            (base, base_se),
            (es_only[0], es_only[1]),
            (dg_only[0], dg_only[1]),
        ):
            margin = rival - best
            noise = float(np.hypot(best_se, rival_se))
            assert margin > 2.0 * noise, (
                f"{metric}: best {best:.5f}+-{best_se:.5f} vs rival "
                f"{rival:.5f}+-{rival_se:.5f}"
            )
        details.append(f"{metric} argmin (w={w_best}, b={b_best}) = {best:.4f}")

    print("criterion 8 (combined ablation): PASS - " + "; ".join(details))


def test_criterion_9_verify_command_green(capsys):
    """`verify` runs the oracle suite end-to-end and exits 0 on a fresh build."""
    code = main(["verify"])
    out = capsys.readouterr().out
    assert code == 0, out
    for name in (
        "reduction_bit_identity",
        "table1_variance_inflation",
        "guidance_exactness",
        "gradients_vs_finite_differences",
        "solver_order_of_accuracy",
    ):
        assert name in out
    assert "all 5 checks passed" in out
    with capsys.disabled():
        print("criterion 9 (verify command): PASS - exit 0, 5 checks green")
