"""Run configuration: TOML or JSON files mapped onto typed sections.

A config file mirrors the library layout: [world] picks or perturbs a
mixture, [sampler] fills a SamplerConfig, [guidance] selects the correction
source, [discriminator] feeds training, [diagnostics] feeds the drift and
ablation commands.  Everything has a default, so `{}` is a valid config.

Validation happens at load time: unknown keys, non-positive lambda at any
step of the configured run, and missing referenced files all raise
ConfigError before any compute starts.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .discriminator import TrainConfig, log_uniform_levels
from .samplers import SAMPLER_KINDS, SamplerConfig, ScalingSchedule, lambda_at
from .worlds import (
    AnalyticCorrection,
    IsotropicGaussianMixture,
    MixtureScore,
    mixture_from_dict,
    perturb_mixture,
    ring_mixture,
    two_gaussian_mixture,
)

__all__ = ["ConfigError", "RunConfig", "load_config"]


class ConfigError(Exception):
    """Config file could not be parsed or validated."""


def _take(section: Mapping[str, Any], name: str, allowed: dict[str, Any]) -> dict[str, Any]:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(
            f"unknown key(s) {sorted(unknown)} in [{name}]; allowed: {sorted(allowed)}"
        )
    out = dict(allowed)
    out.update(section)
    return out


@dataclass(frozen=True)
class WorldSpec:
    preset: str = "ring"
    n_components: int = 8
    radius: float = 4.0
    component_std: float = 0.3
    centers: tuple[float, float] = (-1.0, 1.0)
    stds: tuple[float, float] = (0.5, 0.5)
    weights: tuple[float, float] = (0.5, 0.5)
    mixture: dict | None = None
    mean_shift: float = 0.0
    variance_scale: float = 1.0
    perturbation_seed: int = 17

    def real_mixture(self) -> IsotropicGaussianMixture:
        if self.preset == "ring":
            return ring_mixture(self.n_components, self.radius, self.component_std)
        if self.preset == "two_gaussian_1d":
            return two_gaussian_mixture(self.centers, self.stds, self.weights)
        if self.preset == "custom":
            if self.mixture is None:
                raise ConfigError("[world] preset 'custom' requires a mixture table")
            return mixture_from_dict(self.mixture)
        raise ConfigError(
            f"unknown [world] preset {self.preset!r}; "
            "expected 'ring', 'two_gaussian_1d' or 'custom'"
        )

    def model_mixture(self) -> IsotropicGaussianMixture:
        real = self.real_mixture()
        if self.mean_shift == 0.0 and self.variance_scale == 1.0:
            return real
        return perturb_mixture(
            real,
            mean_shift=self.mean_shift,
            variance_scale=self.variance_scale,
            seed=self.perturbation_seed,
        )


@dataclass(frozen=True)
class GuidanceSpec:
    source: str = "none"  # none | analytic | discriminator
    weights_file: str | None = None


@dataclass(frozen=True)
class DiagnosticsSpec:
    n: int = 4096
    dg_weight: float = 1.0
    es_b: float = 1.004
    w_values: tuple[float, ...] = (0.0, 1.0, 1.67, 2.0)
    b_values: tuple[float, ...] = (1.0, 1.0004, 1.01, 1.035)
    metrics: tuple[str, ...] = ("fd", "sw")
    n_per_cell: int = 4096
    repeats: int = 4
    sw_projections: int = 64
    training_n: int = 10000


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI command needs, resolved and validated."""

    seed: int = 0
    out: str = "runs/out"
    world: WorldSpec = field(default_factory=WorldSpec)
    sampler_kind: str = "pf_euler"
    steps: int = 21
    batch: int = 1024
    w_dg_1st: float = 0.0
    w_dg_2nd: float = 0.0
    lambda_k: float = 0.0
    lambda_b: float = 1.0
    scale_heun_corrector: bool = True
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    rho: float = 7.0
    beta_start: float = 1e-4
    beta_end: float = 0.02
    guidance: GuidanceSpec = field(default_factory=GuidanceSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    weights_out: str = "discriminator.json"
    diagnostics: DiagnosticsSpec = field(default_factory=DiagnosticsSpec)
    raw: dict = field(default_factory=dict)

    def sampler_config(self, **overrides: Any) -> SamplerConfig:
        kwargs: dict[str, Any] = dict(
            kind=self.sampler_kind,
            steps=self.steps,
            batch=self.batch,
            seed=self.seed,
            w_dg_1st=self.w_dg_1st,
            w_dg_2nd=self.w_dg_2nd,
            scaling=ScalingSchedule(k=self.lambda_k, b=self.lambda_b),
            scale_heun_corrector=self.scale_heun_corrector,
            sigma_min=self.sigma_min,
            sigma_max=self.sigma_max,
            rho=self.rho,
            beta_start=self.beta_start,
            beta_end=self.beta_end,
        )
        kwargs.update(overrides)
        return SamplerConfig(**kwargs)

    def correction(self):
        """Correction provider per [guidance], or None."""
        if self.guidance.source == "none":
            return None
        if self.guidance.source == "analytic":
            return AnalyticCorrection(self.world.real_mixture(), self.world.model_mixture())
        if self.guidance.source == "discriminator":
            from .discriminator import DiscriminatorCorrection, load_mlp

            return DiscriminatorCorrection(load_mlp(self.guidance.weights_file))
        raise ConfigError(
            f"unknown [guidance] source {self.guidance.source!r}; "
            "expected 'none', 'analytic' or 'discriminator'"
        )

    def score_field(self) -> MixtureScore:
        return MixtureScore(self.world.model_mixture())

    def resolved(self) -> dict:
        """Fully resolved, JSON-ready echo for manifests."""
        return {
            "seed": self.seed,
            "out": self.out,
            "world": {
                "preset": self.world.preset,
                "n_components": self.world.n_components,
                "radius": self.world.radius,
                "component_std": self.world.component_std,
                "centers": list(self.world.centers),
                "stds": list(self.world.stds),
                "weights": list(self.world.weights),
                "mixture": self.world.mixture,
                "mean_shift": self.world.mean_shift,
                "variance_scale": self.world.variance_scale,
                "perturbation_seed": self.world.perturbation_seed,
            },
            "sampler": {
                "kind": self.sampler_kind,
                "steps": self.steps,
                "batch": self.batch,
                "w_dg_1st": self.w_dg_1st,
                "w_dg_2nd": self.w_dg_2nd,
                "lambda_k": self.lambda_k,
                "lambda_b": self.lambda_b,
                "scale_heun_corrector": self.scale_heun_corrector,
                "sigma_min": self.sigma_min,
                "sigma_max": self.sigma_max,
                "rho": self.rho,
                "beta_start": self.beta_start,
                "beta_end": self.beta_end,
            },
            "guidance": {
                "source": self.guidance.source,
                "weights_file": self.guidance.weights_file,
            },
            "discriminator": {
                "learning_rate": self.train.learning_rate,
                "epochs": self.train.epochs,
                "batch_size": self.train.batch_size,
                "batches_per_epoch": self.train.batches_per_epoch,
                "momentum": self.train.momentum,
                "seed": self.train.seed,
                "noise_levels": list(self.train.noise_levels),
                "weights_out": self.weights_out,
            },
            "diagnostics": {
                "n": self.diagnostics.n,
                "dg_weight": self.diagnostics.dg_weight,
                "es_b": self.diagnostics.es_b,
                "w_values": list(self.diagnostics.w_values),
                "b_values": list(self.diagnostics.b_values),
                "metrics": list(self.diagnostics.metrics),
                "n_per_cell": self.diagnostics.n_per_cell,
                "repeats": self.diagnostics.repeats,
                "sw_projections": self.diagnostics.sw_projections,
                "training_n": self.diagnostics.training_n,
            },
        }


def _parse_file(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} does not exist")
    text = p.read_bytes()
    try:
        if p.suffix.lower() == ".json":
            return json.loads(text.decode("utf-8"))
        return tomllib.loads(text.decode("utf-8"))
    except (ValueError, tomllib.TOMLDecodeError) as exc:  # json raises ValueError
        raise ConfigError(f"could not parse {p}: {exc}") from exc


def load_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Build a validated RunConfig from an optional file plus CLI overrides.

    Overrides (seed/out/batch/...) take precedence over file values; both
    take precedence over defaults.
    """
    data = _parse_file(path) if path is not None else {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a table/object")

    known_sections = {"seed", "out", "world", "sampler", "guidance", "discriminator", "diagnostics"}
    unknown = set(data) - known_sections
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {sorted(unknown)}; allowed: {sorted(known_sections)}")

    world_raw = dict(data.get("world", {}))
    perturb_raw = world_raw.pop("perturbation", {})
    if not isinstance(perturb_raw, dict):
        raise ConfigError("[world.perturbation] must be a table")
    wvals = _take(
        world_raw,
        "world",
        {
            "preset": "ring",
            "n_components": 8,
            "radius": 4.0,
            "component_std": 0.3,
            "centers": [-1.0, 1.0],
            "stds": [0.5, 0.5],
            "weights": [0.5, 0.5],
            "mixture": None,
        },
    )
    pvals = _take(
        perturb_raw,
        "world.perturbation",
        {"mean_shift": 0.0, "variance_scale": 1.0, "seed": 17},
    )
    world = WorldSpec(
        preset=str(wvals["preset"]),
        n_components=int(wvals["n_components"]),
        radius=float(wvals["radius"]),
        component_std=float(wvals["component_std"]),
        centers=tuple(float(c) for c in wvals["centers"]),
        stds=tuple(float(s) for s in wvals["stds"]),
        weights=tuple(float(w) for w in wvals["weights"]),
        mixture=wvals["mixture"],
        mean_shift=float(pvals["mean_shift"]),
        variance_scale=float(pvals["variance_scale"]),
        perturbation_seed=int(pvals["seed"]),
    )

    svals = _take(
        dict(data.get("sampler", {})),
        "sampler",
        {
            "kind": "pf_euler",
            "steps": 21,
            "batch": 1024,
            "w_dg_1st": 0.0,
            "w_dg_2nd": 0.0,
            "lambda_k": 0.0,
            "lambda_b": 1.0,
            "scale_heun_corrector": True,
            "sigma_min": 0.002,
            "sigma_max": 80.0,
            "rho": 7.0,
            "beta_start": 1e-4,
            "beta_end": 0.02,
        },
    )
    if svals["kind"] not in SAMPLER_KINDS:
        raise ConfigError(f"[sampler] kind must be one of {SAMPLER_KINDS}, got {svals['kind']!r}")

    gvals = _take(
        dict(data.get("guidance", {})),
        "guidance",
        {"source": "none", "weights_file": None},
    )
    dvals = _take(
        dict(data.get("discriminator", {})),
        "discriminator",
        {
            "learning_rate": 0.05,
            "epochs": 40,
            "batch_size": 256,
            "batches_per_epoch": 50,
            "momentum": 0.9,
            "seed": 0,
            "noise_min": 0.002,
            "noise_max": 80.0,
            "noise_count": 24,
            "weights_out": "discriminator.json",
        },
    )
    xvals = _take(
        dict(data.get("diagnostics", {})),
        "diagnostics",
        {
            "n": 4096,
            "dg_weight": 1.0,
            "es_b": 1.004,
            "w_values": [0.0, 1.0, 1.67, 2.0],
            "b_values": [1.0, 1.0004, 1.01, 1.035],
            "metrics": ["fd", "sw"],
            "n_per_cell": 4096,
            "repeats": 4,
            "sw_projections": 64,
            "training_n": 10000,
        },
    )

    cfg = RunConfig(
        seed=int(data.get("seed", 0)),
        out=str(data.get("out", "runs/out")),
        world=world,
        sampler_kind=str(svals["kind"]),
        steps=int(svals["steps"]),
        batch=int(svals["batch"]),
        w_dg_1st=float(svals["w_dg_1st"]),
        w_dg_2nd=float(svals["w_dg_2nd"]),
        lambda_k=float(svals["lambda_k"]),
        lambda_b=float(svals["lambda_b"]),
        scale_heun_corrector=bool(svals["scale_heun_corrector"]),
        sigma_min=float(svals["sigma_min"]),
        sigma_max=float(svals["sigma_max"]),
        rho=float(svals["rho"]),
        beta_start=float(svals["beta_start"]),
        beta_end=float(svals["beta_end"]),
        guidance=GuidanceSpec(
            source=str(gvals["source"]),
            weights_file=None if gvals["weights_file"] is None else str(gvals["weights_file"]),
        ),
        train=TrainConfig(
            learning_rate=float(dvals["learning_rate"]),
            epochs=int(dvals["epochs"]),
            batch_size=int(dvals["batch_size"]),
            batches_per_epoch=int(dvals["batches_per_epoch"]),
            momentum=float(dvals["momentum"]),
            seed=int(dvals["seed"]),
            noise_levels=log_uniform_levels(
                float(dvals["noise_min"]), float(dvals["noise_max"]), int(dvals["noise_count"])
            ),
        ),
        weights_out=str(dvals["weights_out"]),
        diagnostics=DiagnosticsSpec(
            n=int(xvals["n"]),
            dg_weight=float(xvals["dg_weight"]),
            es_b=float(xvals["es_b"]),
            w_values=tuple(float(w) for w in xvals["w_values"]),
            b_values=tuple(float(b) for b in xvals["b_values"]),
            metrics=tuple(str(m) for m in xvals["metrics"]),
            n_per_cell=int(xvals["n_per_cell"]),
            repeats=int(xvals["repeats"]),
            sw_projections=int(xvals["sw_projections"]),
            training_n=int(xvals["training_n"]),
        ),
        raw=data,
    )
    if overrides:
        clean = {k: v for k, v in overrides.items() if v is not None}
        if clean:
            from dataclasses import replace as _replace

            cfg = _replace(cfg, **clean)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.guidance.source == "discriminator":
        if cfg.guidance.weights_file is None:
            raise ConfigError("[guidance] source 'discriminator' requires weights_file")
        if not Path(cfg.guidance.weights_file).exists():
            raise ConfigError(f"[guidance] weights_file {cfg.guidance.weights_file!r} does not exist")
    if cfg.guidance.source not in ("none", "analytic", "discriminator"):
        raise ConfigError(
            f"unknown [guidance] source {cfg.guidance.source!r}; "
            "expected 'none', 'analytic' or 'discriminator'"
        )
    if cfg.steps < 1:
        raise ConfigError(f"[sampler] steps must be >= 1, got {cfg.steps}")
    if cfg.batch < 1:
        raise ConfigError(f"[sampler] batch must be >= 1, got {cfg.batch}")
    sched = ScalingSchedule(k=cfg.lambda_k, b=cfg.lambda_b)
    for t in range(1, cfg.steps + 1):
        lam = sched.k * t + sched.b
        if lam <= 0.0:
            raise ConfigError(
                f"epsilon scaling lambda = {lam:.6g} is non-positive at step t={t} "
                f"(k={sched.k}, b={sched.b}); every step needs lambda > 0"
            )
    # cross-check against the sampler's own guard so messages stay consistent
    try:
        lambda_at(sched, 1)
        lambda_at(sched, cfg.steps)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    b_bad = [b for b in cfg.diagnostics.b_values if any(cfg.lambda_k * t + b <= 0 for t in range(1, cfg.steps + 1))]
    if b_bad:
        raise ConfigError(f"[diagnostics] b_values {b_bad} give non-positive lambda within {cfg.steps} steps")
    if not cfg.world.preset in ("ring", "two_gaussian_1d", "custom"):
        raise ConfigError(
            f"unknown [world] preset {cfg.world.preset!r}; expected 'ring', 'two_gaussian_1d' or 'custom'"
        )
    if cfg.world.variance_scale <= 0:
        raise ConfigError("[world.perturbation] variance_scale must be positive")
    for m in cfg.diagnostics.metrics:
        if m not in ("fd", "sw"):
            raise ConfigError(f"[diagnostics] metrics entries must be 'fd' or 'sw', got {m!r}")
    # build the world once so mixture problems surface at load time, not mid-run
    try:
        cfg.world.model_mixture()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[world] mixture is invalid: {exc}") from exc
