"""Analytic Gaussian-mixture worlds with exact scores at every noise level.

Convolving an isotropic Gaussian mixture with N(0, sigma^2 I) stays inside the
family: component variances just grow by sigma^2.  Everything a sampler needs
therefore has a closed form:

    p_sigma(x)        = sum_k w_k N(x; mu_k, (s_k^2 + sigma^2) I)
    grad log p_sigma  = sum_k r_k(x) * (-(x - mu_k) / (s_k^2 + sigma^2))
    eps(x, sigma)     = -sigma * grad log p_sigma(x)

with posterior responsibilities r_k(x).  A "model" score is built the same way
from a deliberately perturbed copy of the data mixture, which makes the
density-ratio correction grad log (p_real / p_model) exact as well.

All densities and responsibilities are computed in log space (log-sum-exp);
mixtures are immutable and every evaluation here is pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "IsotropicGaussianMixture",
    "ScoreField",
    "MixtureScore",
    "SdeCoefficients",
    "VE_SDE",
    "noised_density",
    "log_noised_density",
    "responsibilities",
    "score",
    "epsilon_from_score",
    "analytic_correction",
    "AnalyticCorrection",
    "sample_mixture",
    "forward_noise",
    "mixture_from_dict",
    "ring_mixture",
    "two_gaussian_mixture",
    "perturb_mixture",
]

MAX_COMPONENTS = 64


@dataclass(frozen=True)
class IsotropicGaussianMixture:
    """Mixture of K isotropic Gaussians in R^d.

    weights : (K,) positive, summing to 1 within 1e-12
    means : (K, d)
    variances : (K,) positive (per-component isotropic variance s_k^2)
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self) -> None:
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        var = np.atleast_1d(np.asarray(self.variances, dtype=np.float64))
        K = w.size
        if K == 0 or K > MAX_COMPONENTS:
            raise ValueError(f"component count must be in 1..{MAX_COMPONENTS}, got {K}")
        if mu.shape[0] != K or var.shape != (K,):
            raise ValueError("weights, means and variances disagree on component count")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1 within 1e-12")
        if not np.all(w > 0.0):
            raise ValueError("mixture weights must all be positive")
        if not np.all(var > 0.0):
            raise ValueError("component variances must all be positive")
        for name, arr in (("weights", w), ("means", mu), ("variances", var)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def dimension(self) -> int:
        return int(self.means.shape[1])

    @property
    def components(self) -> int:
        return int(self.weights.size)

    def mean(self) -> np.ndarray:
        """Exact mixture mean."""
        return self.weights @ self.means

    def covariance(self) -> np.ndarray:
        """Exact mixture covariance sum_k w_k (v_k I + mu_k mu_k^T) - m m^T."""
        d = self.dimension
        m = self.mean()
        second = float(self.weights @ self.variances) * np.eye(d)
        second += (self.weights[:, None] * self.means).T @ self.means
        return second - np.outer(m, m)

    def noised(self, sigma: float) -> "IsotropicGaussianMixture":
        """The mixture after forward noising to level sigma (variances + sigma^2)."""
        if sigma < 0.0:
            raise ValueError("sigma must be nonnegative")
        if sigma == 0.0:
            return self
        return IsotropicGaussianMixture(
            weights=self.weights, means=self.means, variances=self.variances + sigma**2
        )

    def to_json(self) -> dict:
        return {
            "dimension": self.dimension,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }


def mixture_from_dict(spec: dict) -> IsotropicGaussianMixture:
    """Build a mixture from a plain config mapping (dimension, weights, means, variances)."""
    try:
        mix = IsotropicGaussianMixture(
            weights=np.asarray(spec["weights"], dtype=np.float64),
            means=np.asarray(spec["means"], dtype=np.float64),
            variances=np.asarray(spec["variances"], dtype=np.float64),
        )
    except KeyError as missing:
        raise ValueError(f"mixture spec is missing key {missing}") from None
    declared = spec.get("dimension")
    if declared is not None and int(declared) != mix.dimension:
        raise ValueError(
            f"declared dimension {declared} does not match means of dimension {mix.dimension}"
        )
    return mix


def ring_mixture(
    n_components: int = 8, radius: float = 4.0, component_std: float = 0.3
) -> IsotropicGaussianMixture:
    """Equal-weight 2-D mixture with means on a circle; the default experiment world."""
    angles = 2.0 * np.pi * np.arange(n_components) / n_components
    means = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return IsotropicGaussianMixture(
        weights=np.full(n_components, 1.0 / n_components),
        means=means,
        variances=np.full(n_components, component_std**2),
    )


def two_gaussian_mixture(
    centers: tuple[float, float] = (-1.0, 1.0),
    stds: tuple[float, float] = (0.5, 0.5),
    weights: tuple[float, float] = (0.5, 0.5),
) -> IsotropicGaussianMixture:
    """1-D two-component mixture used by the discriminator-fidelity checks."""
    return IsotropicGaussianMixture(
        weights=np.asarray(weights, dtype=np.float64),
        means=np.asarray(centers, dtype=np.float64)[:, None],
        variances=np.asarray(stds, dtype=np.float64) ** 2,
    )


def perturb_mixture(
    mixture: IsotropicGaussianMixture,
    mean_shift: float = 0.0,
    variance_scale: float = 1.0,
    seed: int = 0,
) -> IsotropicGaussianMixture:
    """Deliberately imperfect copy of a mixture, standing in for a trained model.

    Each mean moves by `mean_shift` along a seeded random unit direction and
    every variance is multiplied by `variance_scale`.  The perturbation is
    deterministic given the seed, so 'model' worlds are reproducible.
    """
    if variance_scale <= 0.0:
        raise ValueError("variance_scale must be positive")
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal(mixture.means.shape)
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    directions = directions / np.where(norms == 0.0, 1.0, norms)
    return IsotropicGaussianMixture(
        weights=mixture.weights,
        means=mixture.means + mean_shift * directions,
        variances=mixture.variances * variance_scale,
    )


# ==== density, responsibilities, score =====================================


def _component_log_densities(
    mixture: IsotropicGaussianMixture, sigma: float, x: np.ndarray
) -> np.ndarray:
    """log(w_k N(x; mu_k, (s_k^2 + sigma^2) I)) with shape (..., K)."""
    if sigma < 0.0:
        raise ValueError("sigma must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    d = mixture.dimension
    if x.shape[-1] != d:
        raise ValueError(f"x has dimension {x.shape[-1]}, mixture expects {d}")
    var = mixture.variances + sigma**2  # (K,)
    diff = x[..., None, :] - mixture.means  # (..., K, d)
    sq = np.sum(diff * diff, axis=-1)  # (..., K)
    return np.log(mixture.weights) - 0.5 * d * np.log(2.0 * np.pi * var) - 0.5 * sq / var


def log_noised_density(
    mixture: IsotropicGaussianMixture, sigma: float, x: np.ndarray
) -> np.ndarray:
    """log p_sigma(x), evaluated with log-sum-exp; x may be (d,) or batched (..., d)."""
    logs = logsumexp(_component_log_densities(mixture, sigma, x), axis=-1)
    if not np.all(np.isfinite(logs)):
        raise FloatingPointError(
            "noised density underflowed for every component; x is absurdly far from support"
        )
    return logs


def noised_density(mixture: IsotropicGaussianMixture, sigma: float, x: np.ndarray) -> np.ndarray:
    """p_sigma(x) = sum_k w_k N(x; mu_k, (s_k^2 + sigma^2) I)."""
    out = np.exp(log_noised_density(mixture, sigma, x))
    return float(out) if out.ndim == 0 else out


def responsibilities(
    mixture: IsotropicGaussianMixture, sigma: float, x: np.ndarray
) -> np.ndarray:
    """Posterior component probabilities r_k(x) at noise level sigma, shape (..., K)."""
    logs = _component_log_densities(mixture, sigma, x)
    total = logsumexp(logs, axis=-1, keepdims=True)
    if not np.all(np.isfinite(total)):
        raise FloatingPointError(
            "noised density underflowed for every component; x is absurdly far from support"
        )
    return np.exp(logs - total)


def score(mixture: IsotropicGaussianMixture, sigma: float, x: np.ndarray) -> np.ndarray:
    """grad_x log p_sigma(x) = sum_k r_k(x) * (-(x - mu_k) / (s_k^2 + sigma^2))."""
    x = np.asarray(x, dtype=np.float64)
    r = responsibilities(mixture, sigma, x)  # (..., K)
    var = mixture.variances + sigma**2
    diff = x[..., None, :] - mixture.means  # (..., K, d)
    return np.sum(r[..., None] * (-diff / var[:, None]), axis=-2)


def epsilon_from_score(score_value: np.ndarray, sigma: float) -> np.ndarray:
    """Noise prediction eps = -sigma * score; undefined (rejected) at sigma = 0."""
    if sigma <= 0.0:
        raise ValueError("epsilon extraction requires sigma > 0")
    return -sigma * np.asarray(score_value, dtype=np.float64)


def analytic_correction(
    real_mixture: IsotropicGaussianMixture,
    model_mixture: IsotropicGaussianMixture,
    sigma: float,
    x: np.ndarray,
) -> np.ndarray:
    """Exact density-ratio gradient grad log(p_real / p_model) at noise level sigma."""
    if real_mixture.dimension != model_mixture.dimension:
        raise ValueError("real and model mixtures must share a dimension")
    return score(real_mixture, sigma, x) - score(model_mixture, sigma, x)


def sample_mixture(
    mixture: IsotropicGaussianMixture, n: int, seed: int | np.random.Generator
) -> np.ndarray:
    """n i.i.d. draws: pick a component by weight, then a Gaussian draw; (n, d)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    ks = rng.choice(mixture.components, size=n, p=mixture.weights)
    noise = rng.standard_normal((n, mixture.dimension))
    return mixture.means[ks] + np.sqrt(mixture.variances[ks])[:, None] * noise


def forward_noise(
    x0: np.ndarray,
    epsilon: np.ndarray,
    *,
    alpha_bar: float | None = None,
    sigma: float | None = None,
) -> np.ndarray:
    """Exact forward noising; the noise draw is supplied by the caller.

    Discrete form (pass alpha_bar): sqrt(alpha_bar) x0 + sqrt(1 - alpha_bar) eps.
    Continuous form (pass sigma):   x0 + sigma * eps.
    """
    if (alpha_bar is None) == (sigma is None):
        raise ValueError("pass exactly one of alpha_bar (discrete) or sigma (continuous)")
    x0 = np.asarray(x0, dtype=np.float64)
    epsilon = np.asarray(epsilon, dtype=np.float64)
    if alpha_bar is not None:
        if not 0.0 < alpha_bar <= 1.0:
            raise ValueError("alpha_bar must lie in (0, 1]")
        return np.sqrt(alpha_bar) * x0 + np.sqrt(1.0 - alpha_bar) * epsilon
    if sigma < 0.0:
        raise ValueError("sigma must be nonnegative")
    return x0 + sigma * epsilon


# ==== score fields ==========================================================


class ScoreField:
    """A score function s(x, sigma); x may be a single point (d,) or a batch (n, d)."""

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def score(self, x: np.ndarray, sigma: float) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class MixtureScore(ScoreField):
    """Exact score of a Gaussian mixture.

    Wraps the data mixture for the 'true' field, or a perturbed copy for the
    'model' field (a stand-in for a converged but imperfect network).
    """

    mixture: IsotropicGaussianMixture

    @property
    def dim(self) -> int:
        return self.mixture.dimension

    def score(self, x: np.ndarray, sigma: float) -> np.ndarray:
        return score(self.mixture, sigma, x)


@dataclass(frozen=True)
class AnalyticCorrection:
    """Exact correction provider c(x, sigma) = grad log(p_real / p_model).

    With guidance weight 1 this turns the model score into the true score
    identically, which is what makes guided runs checkable against oracles.
    """

    real: IsotropicGaussianMixture
    model: IsotropicGaussianMixture

    def __post_init__(self) -> None:
        if self.real.dimension != self.model.dimension:
            raise ValueError("real and model mixtures must share a dimension")

    def __call__(self, x: np.ndarray, sigma: float) -> np.ndarray:
        return analytic_correction(self.real, self.model, sigma, x)


@dataclass(frozen=True)
class SdeCoefficients:
    """Variance-exploding forward SDE dx = f dt + g dw with sigma(t) = t.

    f is identically zero and g(t) = sqrt(2t), so the noise level at time t is
    exactly t and time and sigma can be used interchangeably.
    """

    def drift(self, x: np.ndarray, t: float) -> np.ndarray:
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    def diffusion(self, t: float) -> float:
        if t < 0.0:
            raise ValueError("time must be nonnegative")
        return float(np.sqrt(2.0 * t))

    def sigma(self, t: float) -> float:
        return float(t)


VE_SDE = SdeCoefficients()
