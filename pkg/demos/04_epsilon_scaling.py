"""Epsilon scaling: dividing the predicted noise by lambda_t = kt + b.

A model whose components are slightly shifted and under-dispersed produces
ancestral chains that wander off the training manifold.  Scaling the
prediction down by a constant b just above 1 pulls the trajectory back;
the right amount improves both distribution metrics at once.
"""

from dataclasses import replace

import numpy as np

from driftlab import (
    FrechetStats,
    IsotropicGaussianMixture,
    MixtureScore,
    SamplerConfig,
    ScalingSchedule,
    frechet_distance,
    perturb_mixture,
    sample,
    sample_mixture,
    sliced_wasserstein,
)
from driftlab.diagnostics import epsilon_norm_sampling


def main() -> None:
    real = IsotropicGaussianMixture(weights=[1.0], means=[[0.0, 0.0]], variances=[4.0])
    model = perturb_mixture(real, mean_shift=0.02, variance_scale=0.85, seed=17)
    field = MixtureScore(model)
    base = SamplerConfig(kind="ancestral", steps=60, batch=8000, seed=11,
                         beta_start=1e-4, beta_end=0.145)

    sweep = (1.0, 1.0125, 1.025, 1.0375, 1.05)
    variants = {
        f"b={b}": (replace(base, scaling=ScalingSchedule(k=0.0, b=b)), field, None)
        for b in sweep
    }
    curve = epsilon_norm_sampling(
        variants, training_field=field, world_mixture=real,
        training_n=8000, training_seed=1,
    )
    gap_unscaled = np.abs(curve.gap("b=1.0"))

    target = FrechetStats.of_mixture(real)
    print(f"{'b':>7} {'gap shrunk at':>14} {'FD':>9} {'SW':>9}")
    for b in sweep:
        frac = float(np.mean(np.abs(curve.gap(f"b={b}")) < gap_unscaled))
        cfg = replace(base, scaling=ScalingSchedule(k=0.0, b=b), seed=1000)
        x, _ = sample(cfg, field)
        fd = frechet_distance(FrechetStats.from_samples(x), target)
        sw = sliced_wasserstein(x, sample_mixture(real, 8000, 1007), seed=1000)
        marker = "  (identity)" if b == 1.0 else ""
        print(f"{b:>7} {frac:>13.1%} {fd:>9.4f} {sw:>9.4f}{marker}")

    print("\nthe un-scaled chain starts from N(0, I) while the model's terminal")
    print("marginal is wider, so every lambda > 1 in the sweep both narrows the")
    print("eps-norm gap and moves the terminal distribution toward the target")


if __name__ == "__main__":
    main()
