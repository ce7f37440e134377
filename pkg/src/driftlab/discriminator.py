"""Dense real-vs-generated classifier and the guidance correction it induces.

A small MLP d(x, sigma) is trained with binary cross-entropy to separate
noised real samples (label 1) from noised model samples (label 0), with the
noise level appended to the input as log sigma.  For a sigmoid-output
classifier, log(d / (1 - d)) is exactly the pre-sigmoid logit, so the
density-ratio correction

    c(x, sigma) = grad_x log(d / (1 - d)) = grad_x logit(x, sigma)

is read off as the input gradient of the logit, computed by reverse-mode
differentiation through the network (no autodiff framework; the layers, loss
and both gradient passes are explicit numpy).

Training is plain SGD with momentum, single-threaded and fully seeded, so a
fixed config reproduces the final weights bit for bit.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .worlds import IsotropicGaussianMixture, analytic_correction, sample_mixture

__all__ = [
    "Mlp",
    "TrainConfig",
    "TrainLog",
    "TrainingDivergedError",
    "SaturationWarning",
    "DiscriminatorCorrection",
    "train",
    "loss_and_gradients",
    "logit_ratio_correction",
    "correction_quality",
    "log_uniform_levels",
    "save_mlp",
    "load_mlp",
]

LOGIT_CLAMP = 15.0  # applied inside the loss only, never in correction extraction


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss goes non-finite (learning rate too high)."""


class SaturationWarning(UserWarning):
    """Emitted when almost all discriminator outputs sit hard against 0 or 1."""


def log_uniform_levels(lo: float = 0.002, hi: float = 80.0, count: int = 24) -> tuple[float, ...]:
    """Geometric set of noise levels; sampling it uniformly is log-uniform over [lo, hi]."""
    if not 0.0 < lo < hi:
        raise ValueError("require 0 < lo < hi")
    return tuple(float(s) for s in np.geomspace(lo, hi, count))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 40
    batch_size: int = 256
    noise_levels: tuple[float, ...] = field(default_factory=log_uniform_levels)
    seed: int = 0
    momentum: float = 0.9
    batches_per_epoch: int = 50

    def __post_init__(self) -> None:
        if self.learning_rate <= 0.0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("learning_rate, epochs and batch_size must be positive")
        if len(self.noise_levels) == 0:
            raise ValueError("noise_levels must be nonempty")
        if any(s <= 0.0 for s in self.noise_levels):
            raise ValueError("noise levels must be positive (log sigma feature)")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batches_per_epoch < 1:
            raise ValueError("batches_per_epoch must be >= 1")


@dataclass
class TrainLog:
    epoch_losses: list[float]
    holdout_accuracy: float | None = None
    mean_abs_logit: float | None = None


@dataclass
class Mlp:
    """Fully connected tanh network with a single pre-sigmoid output logit.

    The input layer width is d + 1: the sample coordinates plus log sigma.
    Treated as immutable once training has finished.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"
    seed: int | None = None
    log: TrainLog | None = None

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return tuple(w.shape[0] for w in self.weights) + (self.weights[-1].shape[1],)

    @property
    def input_dim(self) -> int:
        return int(self.weights[0].shape[0])

    @classmethod
    def initialize(
        cls, input_dim: int, hidden: tuple[int, ...] = (64, 64, 64), seed: int = 0
    ) -> "Mlp":
        """Seeded 1/sqrt(fan_in) Gaussian init, biases zero."""
        if input_dim < 2:
            raise ValueError("input_dim must be >= 2 (coordinates plus log sigma)")
        rng = np.random.default_rng(seed)
        dims = (int(input_dim),) + tuple(int(h) for h in hidden) + (1,)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            weights.append(rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in))
            biases.append(np.zeros(fan_out))
        return cls(weights=weights, biases=biases, activation="tanh", seed=seed)

    # ---- forward / backward -----------------------------------------------

    def _forward(self, features: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Returns (logits (n,), per-layer activations including the input)."""
        acts = [features]
        a = features
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.tanh(a @ W + b)
            acts.append(a)
        logits = a @ self.weights[-1] + self.biases[-1]
        return logits[:, 0], acts

    def logits(self, features: np.ndarray) -> np.ndarray:
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if features.shape[1] != self.input_dim:
            raise ValueError(f"expected {self.input_dim} input features, got {features.shape[1]}")
        return self._forward(features)[0]

    def probabilities(self, features: np.ndarray) -> np.ndarray:
        return expit(self.logits(features))

    def input_gradients(self, features: np.ndarray) -> np.ndarray:
        """d logit / d features for every row, by reverse accumulation; (n, input_dim)."""
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        _, acts = self._forward(features)
        delta = np.ones((features.shape[0], 1))
        delta = delta @ self.weights[-1].T  # into the last hidden activation
        for W, a in zip(reversed(self.weights[:-1]), reversed(acts[1:])):
            delta = (delta * (1.0 - a * a)) @ W.T
        return delta


def features_for(x: np.ndarray, sigma: float) -> np.ndarray:
    """Stack coordinates with the log sigma conditioning feature; (n, d+1)."""
    if sigma <= 0.0:
        raise ValueError("sigma must be positive (log sigma feature)")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    col = np.full((x.shape[0], 1), np.log(sigma))
    return np.concatenate([x, col], axis=1)


def loss_and_gradients(
    mlp: Mlp, features: np.ndarray, labels: np.ndarray
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean BCE loss and its parameter gradients.

    Logits are clamped to +-15 inside the loss (and the clamp kills the
    gradient beyond the boundary, which is the overconfidence brake).
    """
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    logits, acts = mlp._forward(features)
    clamped = np.clip(logits, -LOGIT_CLAMP, LOGIT_CLAMP)
    loss = float(np.mean(np.logaddexp(0.0, clamped) - labels * clamped))
    n = logits.size
    dlogit = (expit(clamped) - labels) * (np.abs(logits) <= LOGIT_CLAMP) / n
    delta = dlogit[:, None]
    grads_w: list[np.ndarray] = [np.empty(0)] * len(mlp.weights)
    grads_b: list[np.ndarray] = [np.empty(0)] * len(mlp.biases)
    for layer in range(len(mlp.weights) - 1, -1, -1):
        grads_w[layer] = acts[layer].T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            a = acts[layer]
            delta = (delta @ mlp.weights[layer].T) * (1.0 - a * a)
    return loss, grads_w, grads_b


def _draw_clean(source, n: int, rng: np.random.Generator) -> np.ndarray:
    """Clean draws from a mixture sampler or a stored sample array."""
    if isinstance(source, IsotropicGaussianMixture):
        return sample_mixture(source, n, rng)
    store = np.atleast_2d(np.asarray(source, dtype=np.float64))
    rows = rng.integers(0, store.shape[0], size=n)
    return store[rows]


def _source_dim(source) -> int:
    if isinstance(source, IsotropicGaussianMixture):
        return source.dimension
    return int(np.atleast_2d(np.asarray(source)).shape[1])


def _noised_batch(source, sigmas: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    x0 = _draw_clean(source, sigmas.size, rng)
    return x0 + sigmas[:, None] * rng.standard_normal(x0.shape)


def train(
    real_source,
    fake_source,
    noise_levels: tuple[float, ...] | None = None,
    config: TrainConfig | None = None,
) -> Mlp:
    """Fit the classifier on noised real (label 1) vs noised fake (label 0) pairs.

    `real_source` and `fake_source` are either mixtures (sampled on the fly)
    or arrays of stored samples (resampled with replacement).  Each minibatch
    draws one noise level per pair from `noise_levels` (defaulting to the
    config's set), noises both classes at that level, and takes one SGD step
    with momentum.  Per-epoch mean losses are recorded on the returned
    network's `log`.
    """
    config = config or TrainConfig()
    levels = np.asarray(noise_levels if noise_levels is not None else config.noise_levels)
    if levels.size == 0 or np.any(levels <= 0.0):
        raise ValueError("noise levels must be a nonempty set of positive reals")
    d = _source_dim(real_source)
    if _source_dim(fake_source) != d:
        raise ValueError("real and fake sources must share a dimension")

    rng = np.random.default_rng(config.seed)
    mlp = Mlp.initialize(d + 1, seed=config.seed)
    vel_w = [np.zeros_like(w) for w in mlp.weights]
    vel_b = [np.zeros_like(b) for b in mlp.biases]

    epoch_losses: list[float] = []
    for _epoch in range(config.epochs):
        running = 0.0
        for _step in range(config.batches_per_epoch):
            sig = rng.choice(levels, size=config.batch_size)
            x_real = _noised_batch(real_source, sig, rng)
            x_fake = _noised_batch(fake_source, sig, rng)
            logsig = np.log(np.concatenate([sig, sig]))[:, None]
            feats = np.concatenate(
                [np.concatenate([x_real, x_fake], axis=0), logsig], axis=1
            )
            labels = np.concatenate(
                [np.ones(config.batch_size), np.zeros(config.batch_size)]
            )
            loss, gw, gb = loss_and_gradients(mlp, feats, labels)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite training loss at epoch {_epoch + 1}; lower the learning rate"
                )
            for i in range(len(mlp.weights)):
                vel_w[i] = config.momentum * vel_w[i] - config.learning_rate * gw[i]
                vel_b[i] = config.momentum * vel_b[i] - config.learning_rate * gb[i]
                mlp.weights[i] = mlp.weights[i] + vel_w[i]
                mlp.biases[i] = mlp.biases[i] + vel_b[i]
            running += loss
        epoch_losses.append(running / config.batches_per_epoch)

    # Held-out diagnostics drawn after training, from the same stream.
    n_eval = 2000
    sig = rng.choice(levels, size=n_eval)
    x_real = _noised_batch(real_source, sig, rng)
    x_fake = _noised_batch(fake_source, sig, rng)
    logsig = np.log(np.concatenate([sig, sig]))[:, None]
    feats = np.concatenate([np.concatenate([x_real, x_fake], axis=0), logsig], axis=1)
    labels = np.concatenate([np.ones(n_eval), np.zeros(n_eval)])
    probs = expit(mlp.logits(feats))
    accuracy = float(np.mean((probs > 0.5) == (labels > 0.5)))
    saturated = np.mean((probs < 1e-6) | (probs > 1.0 - 1e-6))
    if saturated > 0.99:
        warnings.warn(
            f"{saturated:.1%} of discriminator outputs are within 1e-6 of 0 or 1; "
            "the classifier is saturated and its logits may be unreliable",
            SaturationWarning,
        )
    mlp.log = TrainLog(
        epoch_losses=epoch_losses,
        holdout_accuracy=accuracy,
        mean_abs_logit=float(np.mean(np.abs(mlp.logits(feats)))),
    )
    return mlp


def logit_ratio_correction(mlp: Mlp, x: np.ndarray, sigma: float) -> np.ndarray:
    """Estimated correction c(x, sigma) = grad_x logit(x, sigma).

    Only the coordinate gradients are returned; the gradient with respect to
    the log sigma feature is discarded.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    grads = mlp.input_gradients(features_for(x, sigma))[:, :-1]
    return grads[0] if single else grads


def correction_quality(
    mlp: Mlp,
    real_mixture: IsotropicGaussianMixture,
    model_mixture: IsotropicGaussianMixture,
    sigma: float,
    eval_points: np.ndarray,
) -> float:
    """Mean L2 error of the learned correction, normalized by the mean true norm.

    Normalizing by the mean (rather than pointwise) keeps points where the
    true correction vanishes from dominating; when the true correction is the
    zero field the plain mean absolute error is returned instead.
    """
    eval_points = np.atleast_2d(np.asarray(eval_points, dtype=np.float64))
    est = logit_ratio_correction(mlp, eval_points, sigma)
    true = analytic_correction(real_mixture, model_mixture, sigma, eval_points)
    err = float(np.mean(np.linalg.norm(est - true, axis=1)))
    scale = float(np.mean(np.linalg.norm(true, axis=1)))
    if scale < 1e-12:
        return err
    return err / scale


@dataclass(frozen=True)
class DiscriminatorCorrection:
    """Correction provider backed by a trained classifier."""

    mlp: Mlp

    @property
    def dim(self) -> int:
        return self.mlp.input_dim - 1

    def __call__(self, x: np.ndarray, sigma: float) -> np.ndarray:
        return logit_ratio_correction(self.mlp, x, sigma)


# ==== serialization =========================================================


def save_mlp(mlp: Mlp, path) -> None:
    """JSON weight file with a header (layer_dims, activation, training seed)."""
    payload = {
        "layer_dims": list(mlp.layer_dims),
        "activation": mlp.activation,
        "seed": mlp.seed,
        "weights": [w.tolist() for w in mlp.weights],
        "biases": [b.tolist() for b in mlp.biases],
    }
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_mlp(path) -> Mlp:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    mlp = Mlp(
        weights=[np.asarray(w, dtype=np.float64) for w in payload["weights"]],
        biases=[np.asarray(b, dtype=np.float64) for b in payload["biases"]],
        activation=payload.get("activation", "tanh"),
        seed=payload.get("seed"),
    )
    if tuple(payload["layer_dims"]) != mlp.layer_dims:
        raise ValueError("weight file header disagrees with stored matrices")
    return mlp
