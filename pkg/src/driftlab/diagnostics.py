"""Exposure-bias instrumentation and distributional quality metrics.

The central diagnostic compares two epsilon-norm curves over the sampling
grid: the training-side curve evaluates the model's noise prediction on
forward-noised real data, the sampling-side curve reads the predictions the
solver actually saw along its own trajectories.  With an imperfect model the
sampling curve pulls away from the training curve as sigma shrinks; that gap
is the measurable footprint of exposure bias, and the effect of guidance or
epsilon scaling shows up directly as the gap widening or closing.

Terminal sample quality is scored two ways: a Frechet distance between fitted
Gaussians (desk-scale FID stand-in, blind to multimodality) and a sliced
Wasserstein distance (which is not).  Both appear in every ablation table.

Norm aggregation everywhere is the mean of per-sample L2 norms; output
metadata records that choice.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg

from .samplers import DivergenceError, SamplerConfig, ScalingSchedule, TrajectoryTrace, sample
from .schedules import ContinuousTimeGrid, DiscreteNoiseSchedule
from .worlds import (
    IsotropicGaussianMixture,
    ScoreField,
    epsilon_from_score,
    sample_mixture,
)

__all__ = [
    "NORM_AGGREGATION",
    "DriftCurve",
    "FrechetStats",
    "AblationGrid",
    "epsilon_norm_training",
    "epsilon_norm_sampling",
    "predicted_reverse_variance",
    "variance_inflation_check",
    "frechet_distance",
    "sliced_wasserstein",
    "ablate",
]

NORM_AGGREGATION = "mean_of_sample_l2_norms"


# ==== epsilon-norm curves ===================================================


@dataclass(frozen=True)
class DriftCurve:
    """Aligned training-vs-sampling epsilon-norm curves over one solver grid."""

    steps: np.ndarray
    sigmas: np.ndarray
    training_mean: np.ndarray
    training_stderr: np.ndarray
    training_n: int
    variant_mean: dict
    variant_stderr: dict
    variant_n: dict
    metadata: dict

    @property
    def variants(self) -> tuple[str, ...]:
        return tuple(self.variant_mean.keys())

    def gap(self, variant: str) -> np.ndarray:
        """Sampling-minus-training mean norms, per step."""
        return self.variant_mean[variant] - self.training_mean

    def combined_stderr(self, variant: str) -> np.ndarray:
        return np.sqrt(self.variant_stderr[variant] ** 2 + self.training_stderr**2)

    def to_rows(self) -> list[tuple]:
        """Long-format rows (step, sigma, variant, mean_eps_norm, stderr, n)."""
        rows = []
        for i, (step, sig) in enumerate(zip(self.steps, self.sigmas)):
            rows.append(
                (int(step), float(sig), "training", float(self.training_mean[i]),
                 float(self.training_stderr[i]), self.training_n)
            )
        for name in self.variants:
            for i, (step, sig) in enumerate(zip(self.steps, self.sigmas)):
                rows.append(
                    (int(step), float(sig), name, float(self.variant_mean[name][i]),
                     float(self.variant_stderr[name][i]), self.variant_n[name])
                )
        return rows


def _levels_array(grid) -> np.ndarray:
    if isinstance(grid, ContinuousTimeGrid):
        return np.asarray(grid.sigmas[:-1], dtype=np.float64)
    if isinstance(grid, DiscreteNoiseSchedule):
        return np.sqrt((1.0 - grid.alpha_bars) / grid.alpha_bars)[::-1]
    return np.asarray(grid, dtype=np.float64)


def epsilon_norm_training(
    score_field: ScoreField,
    world_mixture: IsotropicGaussianMixture,
    grid,
    n: int = 10_000,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Training-side curve: noise fresh real data at each level, read off ||eps||.

    `grid` is a sigma grid, a discrete schedule, or any sequence of positive
    levels.  Returns (mean_norms, stderrs) aligned with the levels.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    levels = _levels_array(grid)
    rng = np.random.default_rng(seed)
    means = np.empty(levels.size)
    errs = np.empty(levels.size)
    for i, sig in enumerate(levels):
        x0 = sample_mixture(world_mixture, n, rng)
        x = x0 + sig * rng.standard_normal(x0.shape)
        eps = epsilon_from_score(score_field.score(x, float(sig)), float(sig))
        norms = np.linalg.norm(eps, axis=-1)
        means[i] = norms.mean()
        errs[i] = norms.std(ddof=1) / np.sqrt(n) if n > 1 else 0.0
    return means, errs


def epsilon_norm_sampling(
    variants: Mapping[str, tuple[SamplerConfig, ScoreField, Callable | None]],
    training_field: ScoreField,
    world_mixture: IsotropicGaussianMixture,
    training_n: int = 10_000,
    training_seed: int = 1,
) -> DriftCurve:
    """Run each sampling variant, align traces with a fresh training-side curve.

    Every variant must share the solver kind, step count and seed; its tuple
    is (config, base score field, correction provider or None).  The
    training-side curve evaluates `training_field` (the plain model field) on
    forward-noised draws from `world_mixture` at the shared grid levels.
    """
    if not variants:
        raise ValueError("need at least one sampling variant")
    kinds = {cfg.kind for cfg, _, _ in variants.values()}
    steps = {cfg.steps for cfg, _, _ in variants.values()}
    seeds = {cfg.seed for cfg, _, _ in variants.values()}
    if len(kinds) != 1 or len(steps) != 1 or len(seeds) != 1:
        raise ValueError("drift-curve variants must share solver kind, steps and seed")

    traces: dict[str, TrajectoryTrace] = {}
    for name, (cfg, base_field, correction) in variants.items():
        _, trace = sample(cfg, base_field, correction)
        traces[name] = trace

    first = next(iter(traces.values()))
    for name, tr in traces.items():
        if not np.allclose(tr.sigmas, first.sigmas):
            raise ValueError(f"variant {name!r} ran on a different sigma grid")

    train_mean, train_err = epsilon_norm_training(
        training_field, world_mixture, first.sigmas, n=training_n, seed=training_seed
    )
    return DriftCurve(
        steps=first.steps,
        sigmas=first.sigmas,
        training_mean=train_mean,
        training_stderr=train_err,
        training_n=training_n,
        variant_mean={k: t.mean_eps_norm for k, t in traces.items()},
        variant_stderr={k: t.stderr_eps_norm for k, t in traces.items()},
        variant_n={k: t.n for k, t in traces.items()},
        metadata={
            "norm_aggregation": NORM_AGGREGATION,
            "solver": next(iter(kinds)),
            "steps": next(iter(steps)),
            "seed": next(iter(seeds)),
        },
    )


# ==== one-step variance inflation (Table 1 protocol) ========================


def predicted_reverse_variance(
    alpha_bar_t: float, beta_next: float, e_next: float
) -> tuple[float, float]:
    """Predicted Var(x_t) after one reverse step, and its inflation term.

    Total = (1 - alpha_bar_t) + (sqrt(alpha_bar_t) * beta_next / (1 - alpha_bar_next) * e_next)^2
    with alpha_bar_next = alpha_bar_t * (1 - beta_next).  An error-free
    x0-prediction (e_next = 0) collapses to the training variance 1 - alpha_bar_t.
    """
    alpha_bar_next = alpha_bar_t * (1.0 - beta_next)
    inflation = (np.sqrt(alpha_bar_t) * beta_next / (1.0 - alpha_bar_next) * e_next) ** 2
    return float(1.0 - alpha_bar_t + inflation), float(inflation)


def variance_inflation_check(
    schedule: DiscreteNoiseSchedule,
    t: int,
    e_next: float,
    n: int = 100_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte-Carlo check of the predicted one-step sampling variance.

    Simulates the reverse posterior step from t+1 to t with an x0 prediction
    x_pred = x0 + e_next * eps0 (imperfect-prediction model, eps0 standard
    normal), and returns (empirical Var(x_t), predicted Var(x_t)) for a fixed
    scalar x0 = 0.
    """
    if e_next < 0.0:
        raise ValueError("e_next must be nonnegative")
    if not 1 <= t < schedule.step_count:
        raise IndexError("need 1 <= t and t+1 <= T")
    abar_t = schedule.alpha_bar(t)
    abar_next = schedule.alpha_bar(t + 1)
    beta_next = schedule.beta(t + 1)
    alpha_next = schedule.alpha(t + 1)
    post_beta = schedule.posterior_beta(t + 1)

    c_pred = np.sqrt(abar_t) * beta_next / (1.0 - abar_next)
    c_state = np.sqrt(alpha_next) * (1.0 - abar_t) / (1.0 - abar_next)

    rng = np.random.default_rng(seed)
    eps = rng.standard_normal(n)
    eps0 = rng.standard_normal(n)
    z = rng.standard_normal(n)
    x_next = np.sqrt(1.0 - abar_next) * eps  # x0 = 0
    x_pred = e_next * eps0
    x_t = c_pred * x_pred + c_state * x_next + np.sqrt(post_beta) * z

    predicted, _ = predicted_reverse_variance(abar_t, beta_next, e_next)
    return float(np.var(x_t, ddof=1)), predicted


# ==== distribution metrics ==================================================


@dataclass(frozen=True)
class FrechetStats:
    """Gaussian summary (mean, covariance) of a sample set or analytic world."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self) -> None:
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=np.float64))
        d = mean.size
        if cov.shape != (d, d):
            raise ValueError("covariance shape must match the mean dimension")
        if not np.allclose(cov, cov.T, atol=1e-10, rtol=0.0):
            raise ValueError("covariance must be symmetric within 1e-10")
        eigs = np.linalg.eigvalsh((cov + cov.T) / 2.0)
        if np.min(eigs) < -1e-10:
            raise ValueError("covariance has an eigenvalue below -1e-10; not PSD")
        for name, arr in (("mean", mean), ("covariance", cov)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "FrechetStats":
        samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
        if samples.shape[0] < 2:
            raise ValueError("need at least 2 samples to fit a covariance")
        cov = np.cov(samples, rowvar=False, ddof=1)
        cov = np.atleast_2d(cov)
        return cls(mean=samples.mean(axis=0), covariance=(cov + cov.T) / 2.0)

    @classmethod
    def of_mixture(cls, mixture: IsotropicGaussianMixture) -> "FrechetStats":
        return cls(mean=mixture.mean(), covariance=mixture.covariance())

    @property
    def dimension(self) -> int:
        return int(self.mean.size)

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "covariance": self.covariance.tolist()}


def frechet_distance(stats_a: FrechetStats, stats_b: FrechetStats) -> float:
    """FD = sqrt(||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)))."""
    if stats_a.dimension != stats_b.dimension:
        raise ValueError("stats must share a dimension")
    diff = stats_a.mean - stats_b.mean
    prod = stats_a.covariance @ stats_b.covariance
    root = scipy.linalg.sqrtm(prod)
    if np.iscomplexobj(root):
        if np.max(np.abs(root.imag)) > 1e-8:
            raise ValueError("covariance product has no real square root; inputs not PSD?")
        root = root.real
    fd2 = float(diff @ diff + np.trace(stats_a.covariance + stats_b.covariance - 2.0 * root))
    return float(np.sqrt(max(fd2, 0.0)))


def sliced_wasserstein(
    samples_a: np.ndarray,
    samples_b: np.ndarray,
    n_projections: int = 64,
    seed: int = 0,
) -> float:
    """Average 1-D 2-Wasserstein distance over random unit projection directions.

    Equal-size sample sets use the exact sorted-sample formula; unequal sizes
    compare empirical quantile functions on a midpoint grid.
    """
    a = np.atleast_2d(np.asarray(samples_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(samples_b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise ValueError("sample sets must share a dimension")
    if n_projections < 1:
        raise ValueError("n_projections must be >= 1")
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_projections, a.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    proj_a = a @ dirs.T  # (n_a, P)
    proj_b = b @ dirs.T
    if a.shape[0] == b.shape[0]:
        qa = np.sort(proj_a, axis=0)
        qb = np.sort(proj_b, axis=0)
    else:
        q = (np.arange(max(a.shape[0], b.shape[0])) + 0.5) / max(a.shape[0], b.shape[0])
        qa = np.quantile(proj_a, q, axis=0)
        qb = np.quantile(proj_b, q, axis=0)
    w2 = np.sqrt(np.mean((qa - qb) ** 2, axis=0))
    return float(w2.mean())


# ==== ablation grids ========================================================


@dataclass(frozen=True)
class AblationGrid:
    """Complete (w_dg, lambda_b) grid of metric values with Monte-Carlo error bars.

    Every cell is either valued ('ok') or explicitly 'failed' (sampler
    divergence); the grid is never sparse.
    """

    w_values: tuple[float, ...]
    b_values: tuple[float, ...]
    metrics: tuple[str, ...]
    values: dict
    stderrs: dict
    status: np.ndarray
    metadata: dict

    def cell(self, metric: str, w: float, b: float) -> tuple[float, float]:
        i = self.w_values.index(w)
        j = self.b_values.index(b)
        return float(self.values[metric][i, j]), float(self.stderrs[metric][i, j])

    def argmin(self, metric: str) -> tuple[float, float]:
        vals = np.where(self.status == "ok", self.values[metric], np.inf)
        i, j = np.unravel_index(int(np.argmin(vals)), vals.shape)
        return self.w_values[i], self.b_values[j]

    def to_rows(self) -> list[tuple]:
        """Long-format rows (w_dg, lambda_b, metric_name, value, stderr, status)."""
        rows = []
        for metric in self.metrics:
            for i, w in enumerate(self.w_values):
                for j, b in enumerate(self.b_values):
                    rows.append(
                        (float(w), float(b), metric, float(self.values[metric][i, j]),
                         float(self.stderrs[metric][i, j]), str(self.status[i, j]))
                    )
        return rows


def _cell_metrics(
    samples: np.ndarray,
    reference_stats: FrechetStats,
    reference_samples: np.ndarray,
    metrics: Sequence[str],
    sw_projections: int,
    sw_seed: int,
) -> dict[str, float]:
    out = {}
    for metric in metrics:
        if metric == "fd":
            out[metric] = frechet_distance(FrechetStats.from_samples(samples), reference_stats)
        elif metric == "sw":
            out[metric] = sliced_wasserstein(
                samples, reference_samples, n_projections=sw_projections, seed=sw_seed
            )
        else:
            raise ValueError(f"unknown metric {metric!r}; expected 'fd' or 'sw'")
    return out


def ablate(
    template: SamplerConfig,
    score: ScoreField,
    correction: Callable | None,
    real_mixture: IsotropicGaussianMixture,
    w_values: Sequence[float],
    b_values: Sequence[float],
    metrics: Sequence[str] = ("fd", "sw"),
    n_per_cell: int = 4096,
    repeats: int = 4,
    seed: int = 0,
    sw_projections: int = 64,
) -> AblationGrid:
    """Sweep guidance weight and scaling intercept on a shared solver template.

    Each cell reruns the template with (w_dg_1st = w, lambda b = b) over
    `repeats` independent batches of `n_per_cell` samples; repeat seeds are
    shared across cells, so the (w=0, b=1) cell reproduces the unguided,
    unscaled baseline exactly.  Terminal samples are scored against the real
    mixture: 'fd' against its analytic mean/covariance, 'sw' against
    per-repeat reference draws.  A diverging cell is marked failed, never
    dropped.
    """
    if not w_values or not b_values:
        raise ValueError("both ablation axes must be nonempty")
    w_values = tuple(float(w) for w in w_values)
    b_values = tuple(float(b) for b in b_values)
    metrics = tuple(metrics)
    if repeats < 1 or n_per_cell < 2:
        raise ValueError("need repeats >= 1 and n_per_cell >= 2")

    ref_stats = FrechetStats.of_mixture(real_mixture)
    rep_seeds = [seed + 1000 * (r + 1) for r in range(repeats)]
    ref_samples = [
        sample_mixture(real_mixture, n_per_cell, np.random.default_rng(s + 7))
        for s in rep_seeds
    ]

    shape = (len(w_values), len(b_values))
    values = {m: np.full(shape, np.nan) for m in metrics}
    stderrs = {m: np.full(shape, np.nan) for m in metrics}
    status = np.full(shape, "ok", dtype=object)

    for i, w in enumerate(w_values):
        for j, b in enumerate(b_values):
            per_rep = {m: [] for m in metrics}
            try:
                for r in range(repeats):
                    cfg = replace(
                        template,
                        w_dg_1st=w,
                        scaling=ScalingSchedule(k=template.scaling.k, b=b),
                        batch=n_per_cell,
                        seed=rep_seeds[r],
                        keep_states=False,
                    )
                    samples, _ = sample(cfg, score, correction)
                    got = _cell_metrics(
                        samples, ref_stats, ref_samples[r], metrics, sw_projections, seed + 13
                    )
                    for m in metrics:
                        per_rep[m].append(got[m])
            except DivergenceError:
                status[i, j] = "failed"
                continue
            for m in metrics:
                arr = np.asarray(per_rep[m])
                values[m][i, j] = arr.mean()
                stderrs[m][i, j] = arr.std(ddof=1) / np.sqrt(repeats) if repeats > 1 else 0.0

    return AblationGrid(
        w_values=w_values,
        b_values=b_values,
        metrics=metrics,
        values=values,
        stderrs=stderrs,
        status=status,
        metadata={
            "solver": template.kind,
            "steps": template.steps,
            "seed": seed,
            "n_per_cell": n_per_cell,
            "repeats": repeats,
            "w_dg_2nd": template.w_dg_2nd,
            "norm_aggregation": NORM_AGGREGATION,
        },
    )
