"""Discriminator guidance end to end: train, inspect, then steer a sampler.

A tiny MLP learns to tell real noised points from model noised points; the
gradient of its log-odds is an estimate of the score gap.  Because both
mixtures are analytic the exact gap is available for comparison, and the
guided sampler can be checked against sampling the real world directly.
"""

import numpy as np

from driftlab import (
    MixtureScore,
    SamplerConfig,
    TrainConfig,
    correction_quality,
    perturb_mixture,
    sample,
    sample_mixture,
    train,
    two_gaussian_mixture,
)
from driftlab.discriminator import DiscriminatorCorrection


def main() -> None:
    real = two_gaussian_mixture()
    model = perturb_mixture(real, mean_shift=0.4, variance_scale=1.4, seed=17)
    print("real world: modes at -1/+1, std 0.5; model: shifted 0.4, variance x1.4")

    config = TrainConfig(
        learning_rate=0.05, epochs=60, batch_size=512, batches_per_epoch=50,
        noise_levels=(0.1, 0.5, 1.0), seed=0,
    )
    print(f"training {config.epochs} epochs on levels {config.noise_levels} ...")
    mlp = train(real, model, config=config)
    print(f"  held-out accuracy {mlp.log.holdout_accuracy:.3f}, "
          f"final loss {mlp.log.epoch_losses[-1]:.4f}")

    rng = np.random.default_rng(123)
    for sigma in config.noise_levels:
        pts = sample_mixture(real, 1000, rng) + sigma * rng.standard_normal((1000, 1))
        err = correction_quality(mlp, real, model, sigma, pts)
        print(f"  correction error vs analytic at sigma={sigma}: {err:.3f}")

    cfg = SamplerConfig(kind="ancestral", steps=80, batch=20_000, seed=3,
                        w_dg_1st=1.0, w_dg_2nd=1.0)
    guided, _ = sample(cfg, MixtureScore(model), DiscriminatorCorrection(mlp))
    unguided, _ = sample(cfg, MixtureScore(model))
    reference = sample_mixture(real, 20_000, seed=4)

    print("\nterminal sample moments (target mean 0.000, var 1.250):")
    for name, x in (("model alone", unguided), ("with guidance", guided),
                    ("real world", reference)):
        print(f"  {name:<14} mean {float(np.mean(x)):+.3f}  var {float(np.var(x)):.3f}")
    print("guidance pulls the model's samples most of the way back to the target")


if __name__ == "__main__":
    main()
