"""Guidance-weight x scaling-offset ablation on a world with known geometry.

Each cell samples the perturbed model with one (w, b) combination and scores
the result against the true mixture.  The point of the exercise: the best
cell uses BOTH techniques, beating the exact-correction column at b = 1 -
guidance alone cannot fix the chain's own under-dispersion.
"""

import numpy as np

from driftlab import (
    AnalyticCorrection,
    IsotropicGaussianMixture,
    MixtureScore,
    SamplerConfig,
    ablate,
    perturb_mixture,
)


def main() -> None:
    real = IsotropicGaussianMixture(weights=[1.0], means=[[0.0, 0.0]], variances=[4.0])
    model = perturb_mixture(real, mean_shift=0.4, variance_scale=0.85, seed=17)
    template = SamplerConfig(kind="ancestral", steps=60, seed=0,
                             beta_start=1e-4, beta_end=0.145)
    w_values = (0.0, 1.0, 1.67, 2.0)
    b_values = (1.0, 1.0004, 1.01, 1.035)

    print("running the 16-cell grid (2048 samples x 3 repeats per cell) ...")
    grid = ablate(
        template, MixtureScore(model), AnalyticCorrection(real, model), real,
        w_values=w_values, b_values=b_values, metrics=("fd", "sw"),
        n_per_cell=2048, repeats=3, seed=0,
    )

    for metric in ("fd", "sw"):
        w_best, b_best = grid.argmin(metric)
        print(f"\n{metric} grid (rows w_dg, columns lambda_b; * marks the argmin):")
        header = " ".join(f"{b:>10}" for b in b_values)
        print(f"{'w':>6} {header}")
        for w in w_values:
            cells = []
            for b in b_values:
                value, _ = grid.cell(metric, w, b)
                mark = "*" if (w, b) == (w_best, b_best) else " "
                cells.append(f"{value:>9.4f}{mark}")
            print(f"{w:>6} " + " ".join(cells))
        base, _ = grid.cell(metric, 0.0, 1.0)
        best, _ = grid.cell(metric, w_best, b_best)
        print(f"  baseline (w=0, b=1): {base:.4f}  argmin: {best:.4f}")

    print("\nnote the w=1 column: the correction there is exact, yet b > 1 still")
    print("improves on b = 1.  The residual error lives in the sampling chain,")
    print("not the score estimate, and only the scaling knob reaches it.")


if __name__ == "__main__":
    main()
