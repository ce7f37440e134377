"""Reverse-process samplers: DDPM ancestral, probability-flow Euler and Heun,
and the reverse SDE, each with optional guidance and epsilon scaling.

Conventions shared by every solver here:

* The score source is a ``ScoreField``; guidance wraps one base field and one
  correction provider into ``GuidedScore`` with total score s + w*c.
* Epsilon scaling divides the extracted noise prediction eps = -sigma*s by
  lambda_t = k*t + b at every slope evaluation (both Heun stages by default).
* Under the variance-exploding convention sigma(t) = t, the probability-flow
  ODE is dx/dsigma = -sigma * grad log p_sigma(x), i.e. the slope is exactly
  the extracted eps, and the reverse-SDE drift contribution is 2*eps.
* Traces log the raw (pre-scaling) eps at each visited state; Heun logs the
  predictor-stage eps only, so trace length equals the step count.

The discrete ancestral sampler runs on a DiscreteNoiseSchedule; the ODE/SDE
samplers run on a ContinuousTimeGrid.  There is no cross-conversion.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .schedules import (
    ContinuousTimeGrid,
    DiscreteNoiseSchedule,
    linear_beta_schedule,
    power_sigma_grid,
)
from .worlds import VE_SDE, ScoreField, epsilon_from_score

__all__ = [
    "SAMPLER_KINDS",
    "DIVERGENCE_LIMIT",
    "DivergenceError",
    "ScalingSchedule",
    "GuidedScore",
    "SamplerConfig",
    "TrajectoryTrace",
    "lambda_at",
    "apply_epsilon_scaling",
    "ancestral_step",
    "pf_euler_step",
    "pf_heun_step",
    "reverse_sde_step",
    "sample",
    "nfe",
]

SAMPLER_KINDS = ("ancestral", "pf_euler", "pf_heun", "reverse_sde")

# Trajectories whose norm passes this bound abort with a DivergenceError.
DIVERGENCE_LIMIT = 1e6


class DivergenceError(RuntimeError):
    """A trajectory left the trust region (or went non-finite) at `step_index`."""

    def __init__(self, step_index: int, norm: float):
        self.step_index = int(step_index)
        self.norm = float(norm)
        super().__init__(
            f"trajectory diverged at step {step_index}: max sample norm {norm:.3e} "
            f"exceeds {DIVERGENCE_LIMIT:.0e} or is non-finite"
        )


@dataclass(frozen=True)
class ScalingSchedule:
    """Linear epsilon-scaling schedule lambda_t = k*t + b; k=0 is the uniform schedule."""

    k: float = 0.0
    b: float = 1.0


def lambda_at(schedule: ScalingSchedule, t: float) -> float:
    """lambda_t = k*t + b, rejected unless strictly positive.

    For the ancestral sampler t is the chain timestep (T..1 during sampling);
    for the continuous solvers t is the 1-based step index in sampling order.
    """
    lam = schedule.k * t + schedule.b
    if lam <= 0.0:
        raise ValueError(f"epsilon-scaling lambda = {lam:.6g} at step t={t}; must be positive")
    return float(lam)


def apply_epsilon_scaling(epsilon: np.ndarray, lam: float) -> np.ndarray:
    """Scale the predicted noise down: eps / lambda, componentwise."""
    if lam <= 0.0:
        raise ValueError("lambda must be positive")
    return epsilon / lam


@dataclass(frozen=True)
class GuidedScore(ScoreField):
    """Composite score s_base + weight * correction.

    `correction` maps (x, sigma) to a vector shaped like x (the analytic
    density-ratio gradient, or a discriminator's logit gradient).  A weight of
    exactly 0 returns the base evaluation unchanged, bit for bit.
    """

    base: ScoreField
    correction: Callable[[np.ndarray, float], np.ndarray] | None = None
    weight: float = 0.0

    def __post_init__(self) -> None:
        if self.weight < 0.0:
            raise ValueError("guidance weight must be nonnegative")

    @property
    def dim(self) -> int:
        return self.base.dim

    def score(self, x: np.ndarray, sigma: float) -> np.ndarray:
        base = self.base.score(x, sigma)
        if self.weight == 0.0 or self.correction is None:
            return base
        return base + self.weight * self.correction(x, sigma)


@dataclass(frozen=True)
class SamplerConfig:
    """Everything a run needs: solver, step count, guidance weights, scaling, seed.

    The time discretization is derived from the config: the ancestral chain
    uses a linear beta schedule with `steps` steps, the continuous solvers a
    power sigma grid with `steps` intervals.
    """

    kind: str
    steps: int = 21
    w_dg_1st: float = 0.0
    w_dg_2nd: float = 0.0
    scaling: ScalingSchedule = dc_field(default_factory=ScalingSchedule)
    seed: int = 0
    batch: int = 1
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    rho: float = 7.0
    beta_start: float = 1e-4
    beta_end: float = 0.02
    # lambda at both Heun stages by default; False restricts it to the predictor.
    scale_heun_corrector: bool = True
    keep_states: bool = False

    def __post_init__(self) -> None:
        if self.kind not in SAMPLER_KINDS:
            raise ValueError(f"unknown sampler kind {self.kind!r}; expected one of {SAMPLER_KINDS}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.kind != "ancestral" and self.steps < 2:
            raise ValueError("continuous solvers need steps >= 2 (sigma_max and sigma_min nodes)")
        if self.w_dg_1st < 0.0 or self.w_dg_2nd < 0.0:
            raise ValueError("guidance weights must be nonnegative")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")

    def discrete_schedule(self) -> DiscreteNoiseSchedule:
        return linear_beta_schedule(self.steps, self.beta_start, self.beta_end)

    def continuous_grid(self) -> ContinuousTimeGrid:
        return power_sigma_grid(self.steps, self.sigma_min, self.sigma_max, self.rho)


def nfe(config: SamplerConfig) -> int:
    """Score-evaluation count: Heun pays for the corrector everywhere but the last step."""
    if config.kind == "pf_heun":
        return 2 * config.steps - 1
    return config.steps


@dataclass(frozen=True)
class TrajectoryTrace:
    """Per-step instrumentation of one sampling run, in sampling order.

    `sigmas` holds the noise level at which each slope was evaluated (for the
    ancestral chain, the equivalent continuous level sqrt((1-abar)/abar)).
    `mean_eps_norm` is the batch mean of per-sample L2 norms of the raw
    (pre-scaling) noise prediction; Heun records the predictor stage only.
    `states` optionally stores the initial state plus the state after each step.
    """

    steps: np.ndarray
    sigmas: np.ndarray
    mean_eps_norm: np.ndarray
    stderr_eps_norm: np.ndarray
    n: int
    states: list[np.ndarray] | None = None

    def __len__(self) -> int:
        return int(self.steps.size)


# ==== single-step operations ================================================


def _check_sigma_pair(sigma_from: float, sigma_to: float) -> None:
    if not sigma_from > sigma_to:
        raise ValueError(f"need sigma_from > sigma_to, got {sigma_from} -> {sigma_to}")
    if sigma_to < 0.0:
        raise ValueError("sigma_to must be nonnegative")


def ancestral_step(
    x_t: np.ndarray,
    t: int,
    schedule: DiscreteNoiseSchedule,
    eps_hat: np.ndarray,
    lam: float,
    z: np.ndarray,
) -> np.ndarray:
    """One DDPM ancestral update with the noise prediction scaled by 1/lambda.

    x_{t-1} = (x_t - beta_t/sqrt(1-abar_t) * eps_hat/lambda) / sqrt(alpha_t)
              + sqrt(posterior_beta_t) * z
    """
    beta_t = schedule.beta(t)
    mean = (x_t - (beta_t / np.sqrt(1.0 - schedule.alpha_bar(t))) * apply_epsilon_scaling(eps_hat, lam)) / np.sqrt(
        schedule.alpha(t)
    )
    return mean + np.sqrt(schedule.posterior_beta(t)) * z


def _pf_euler(x, sigma_from, sigma_to, score_field, lam):
    _check_sigma_pair(sigma_from, sigma_to)
    eps = epsilon_from_score(score_field.score(x, sigma_from), sigma_from)
    x_next = x + (sigma_to - sigma_from) * apply_epsilon_scaling(eps, lam)
    return x_next, eps


def pf_euler_step(
    x: np.ndarray,
    sigma_from: float,
    sigma_to: float,
    score_field: ScoreField,
    lam: float = 1.0,
) -> np.ndarray:
    """Euler step of the probability-flow ODE; the slope is the scaled eps."""
    return _pf_euler(x, sigma_from, sigma_to, score_field, lam)[0]


def _pf_heun(x, sigma_from, sigma_to, field_1st, field_2nd, lam, scale_corrector=True):
    _check_sigma_pair(sigma_from, sigma_to)
    h = sigma_to - sigma_from
    eps1 = epsilon_from_score(field_1st.score(x, sigma_from), sigma_from)
    d1 = apply_epsilon_scaling(eps1, lam)
    x_pred = x + h * d1
    if sigma_to == 0.0:
        # eps = -sigma * score vanishes as sigma -> 0, so the corrector slope
        # is exactly zero in the limit
        d2 = np.zeros_like(d1)
    else:
        eps2 = epsilon_from_score(field_2nd.score(x_pred, sigma_to), sigma_to)
        d2 = apply_epsilon_scaling(eps2, lam) if scale_corrector else eps2
    return x + h * (0.5 * (d1 + d2)), eps1


def pf_heun_step(
    x: np.ndarray,
    sigma_from: float,
    sigma_to: float,
    score_field_1st: ScoreField,
    score_field_2nd: ScoreField,
    lam: float = 1.0,
    *,
    scale_corrector: bool = True,
) -> np.ndarray:
    """Heun step: trapezoidal average of the predictor and corrector slopes.

    The corrector conditions at sigma_to and may carry its own guidance weight
    (the 2nd-order field); lambda scales both stages unless scale_corrector is
    off.  At sigma_to = 0 the corrector slope takes its limit value 0, so the
    update halves the predictor slope; the full sampling loop instead ends
    with a plain Euler interval (see sample).
    """
    return _pf_heun(x, sigma_from, sigma_to, score_field_1st, score_field_2nd, lam, scale_corrector)[0]


def _reverse_sde(x, sigma_from, sigma_to, score_field, lam, z):
    _check_sigma_pair(sigma_from, sigma_to)
    eps = epsilon_from_score(score_field.score(x, sigma_from), sigma_from)
    # dx = [f - g^2 s] dt + g dw with f = 0, g^2 = 2 sigma: the drift is 2*eps.
    drift = 2.0 * apply_epsilon_scaling(eps, lam)
    g = VE_SDE.diffusion(sigma_from)
    x_next = x + (sigma_to - sigma_from) * drift + (g * np.sqrt(sigma_from - sigma_to)) * z
    return x_next, eps


def reverse_sde_step(
    x: np.ndarray,
    sigma_from: float,
    sigma_to: float,
    score_field: ScoreField,
    lam: float,
    z: np.ndarray,
) -> np.ndarray:
    """Euler-Maruyama step of the guided reverse SDE under the VE convention."""
    return _reverse_sde(x, sigma_from, sigma_to, score_field, lam, z)[0]


# ==== full sampling loop ====================================================


def _eps_stats(eps: np.ndarray) -> tuple[float, float]:
    norms = np.linalg.norm(np.atleast_2d(eps), axis=-1)
    mean = float(norms.mean())
    stderr = float(norms.std(ddof=1) / np.sqrt(norms.size)) if norms.size > 1 else 0.0
    return mean, stderr


def _guard(x: np.ndarray, step_index: int) -> None:
    worst = float(np.max(np.linalg.norm(x, axis=-1)))
    if not np.isfinite(worst) or worst > DIVERGENCE_LIMIT:
        raise DivergenceError(step_index, worst)


def sample(
    config: SamplerConfig,
    score: ScoreField,
    correction: Callable[[np.ndarray, float], np.ndarray] | None = None,
) -> tuple[np.ndarray, TrajectoryTrace]:
    """Run the configured solver over its full grid.

    The base score and optional correction are combined into guided fields
    with the config's first- and second-order weights (the second-order field
    only matters to the Heun corrector).  Initial states are N(0, sigma_max^2 I)
    for the continuous solvers and N(0, I) for the ancestral chain.  Returns
    the terminal samples, shape (batch, d), and the per-step trace.
    """
    field1 = GuidedScore(base=score, correction=correction, weight=config.w_dg_1st)
    field2 = GuidedScore(base=score, correction=correction, weight=config.w_dg_2nd)
    rng = np.random.default_rng(config.seed)
    d = score.dim

    steps_out: list[int] = []
    sigmas_out: list[float] = []
    means: list[float] = []
    errs: list[float] = []
    states: list[np.ndarray] | None = [] if config.keep_states else None

    def record(i: int, sigma: float, eps: np.ndarray, x: np.ndarray) -> None:
        m, se = _eps_stats(eps)
        steps_out.append(i)
        sigmas_out.append(float(sigma))
        means.append(m)
        errs.append(se)
        if states is not None:
            states.append(x.copy())

    if config.kind == "ancestral":
        schedule = config.discrete_schedule()
        T = schedule.step_count
        x = rng.standard_normal((config.batch, d))
        if states is not None:
            states.append(x.copy())
        for i, t in enumerate(range(T, 0, -1), start=1):
            abar = schedule.alpha_bar(t)
            sigma_t = float(np.sqrt((1.0 - abar) / abar))
            eps_hat = epsilon_from_score(field1.score(x / np.sqrt(abar), sigma_t), sigma_t)
            lam = lambda_at(config.scaling, t)
            z = rng.standard_normal(x.shape) if t > 1 else np.zeros_like(x)
            x = ancestral_step(x, t, schedule, eps_hat, lam, z)
            _guard(x, i)
            record(i, sigma_t, eps_hat, x)
    else:
        grid = config.continuous_grid()
        sig = grid.sigmas
        x = sig[0] * rng.standard_normal((config.batch, d))
        if states is not None:
            states.append(x.copy())
        for i in range(1, grid.node_count + 1):
            sf, st = float(sig[i - 1]), float(sig[i])
            lam = lambda_at(config.scaling, i)
            if config.kind == "pf_euler":
                x, eps = _pf_euler(x, sf, st, field1, lam)
            elif config.kind == "pf_heun":
                if st == 0.0:
                    # eps extraction divides by sigma, so the corrector cannot
                    # condition at 0: the terminal interval is plain Euler
                    x, eps = _pf_euler(x, sf, st, field1, lam)
                else:
                    x, eps = _pf_heun(x, sf, st, field1, field2, lam, config.scale_heun_corrector)
            else:  # reverse_sde
                z = rng.standard_normal(x.shape)
                x, eps = _reverse_sde(x, sf, st, field1, lam, z)
            _guard(x, i)
            record(i, sf, eps, x)

    trace = TrajectoryTrace(
        steps=np.asarray(steps_out, dtype=np.int64),
        sigmas=np.asarray(sigmas_out, dtype=np.float64),
        mean_eps_norm=np.asarray(means, dtype=np.float64),
        stderr_eps_norm=np.asarray(errs, dtype=np.float64),
        n=config.batch,
        states=states,
    )
    return x, trace
