"""driftlab: a desk-scale diffusion sampling lab on analytic Gaussian mixtures.

Worlds are isotropic Gaussian mixtures, so noised densities, scores and the
exact real-vs-model guidance correction all have closed forms.  On top of
that sit four guided samplers (DDPM ancestral, probability-flow Euler and
Heun, reverse-time SDE), epsilon scaling, a small trained discriminator,
drift and quality diagnostics, and a self-verification suite with exact
oracles.
"""

from .schedules import (
    ContinuousTimeGrid,
    DiscreteNoiseSchedule,
    linear_beta_schedule,
    power_sigma_grid,
)
from .worlds import (
    VE_SDE,
    AnalyticCorrection,
    IsotropicGaussianMixture,
    MixtureScore,
    ScoreField,
    SdeCoefficients,
    analytic_correction,
    epsilon_from_score,
    forward_noise,
    log_noised_density,
    mixture_from_dict,
    noised_density,
    perturb_mixture,
    responsibilities,
    ring_mixture,
    sample_mixture,
    score,
    two_gaussian_mixture,
)
from .samplers import (
    SAMPLER_KINDS,
    DivergenceError,
    GuidedScore,
    SamplerConfig,
    ScalingSchedule,
    TrajectoryTrace,
    ancestral_step,
    apply_epsilon_scaling,
    lambda_at,
    nfe,
    pf_euler_step,
    pf_heun_step,
    reverse_sde_step,
    sample,
)
from .discriminator import (
    DiscriminatorCorrection,
    Mlp,
    SaturationWarning,
    TrainConfig,
    TrainingDivergedError,
    TrainLog,
    correction_quality,
    features_for,
    load_mlp,
    log_uniform_levels,
    logit_ratio_correction,
    loss_and_gradients,
    save_mlp,
    train,
)
from .diagnostics import (
    NORM_AGGREGATION,
    AblationGrid,
    DriftCurve,
    FrechetStats,
    ablate,
    epsilon_norm_sampling,
    epsilon_norm_training,
    frechet_distance,
    predicted_reverse_variance,
    sliced_wasserstein,
    variance_inflation_check,
)
from .config import ConfigError, RunConfig, load_config
from .verification import CheckResult, reference_sample, run_verification

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # schedules
    "DiscreteNoiseSchedule",
    "ContinuousTimeGrid",
    "linear_beta_schedule",
    "power_sigma_grid",
    # worlds
    "IsotropicGaussianMixture",
    "mixture_from_dict",
    "ring_mixture",
    "two_gaussian_mixture",
    "perturb_mixture",
    "log_noised_density",
    "noised_density",
    "responsibilities",
    "epsilon_from_score",
    "analytic_correction",
    "AnalyticCorrection",
    "sample_mixture",
    "score",
    "forward_noise",
    "ScoreField",
    "MixtureScore",
    "SdeCoefficients",
    "VE_SDE",
    # samplers
    "SAMPLER_KINDS",
    "DivergenceError",
    "ScalingSchedule",
    "lambda_at",
    "apply_epsilon_scaling",
    "GuidedScore",
    "SamplerConfig",
    "TrajectoryTrace",
    "nfe",
    "ancestral_step",
    "pf_euler_step",
    "pf_heun_step",
    "reverse_sde_step",
    "sample",
    # discriminator
    "Mlp",
    "TrainConfig",
    "TrainLog",
    "TrainingDivergedError",
    "SaturationWarning",
    "log_uniform_levels",
    "features_for",
    "loss_and_gradients",
    "train",
    "logit_ratio_correction",
    "correction_quality",
    "DiscriminatorCorrection",
    "save_mlp",
    "load_mlp",
    # diagnostics
    "NORM_AGGREGATION",
    "DriftCurve",
    "epsilon_norm_training",
    "epsilon_norm_sampling",
    "predicted_reverse_variance",
    "variance_inflation_check",
    "FrechetStats",
    "frechet_distance",
    "sliced_wasserstein",
    "AblationGrid",
    "ablate",
    # config / verification
    "ConfigError",
    "RunConfig",
    "load_config",
    "CheckResult",
    "reference_sample",
    "run_verification",
]
