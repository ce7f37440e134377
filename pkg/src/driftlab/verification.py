"""Self-contained oracle and invariant checks, runnable from tests or the CLI.

The reference samplers in this module are deliberately independent of the
production loop in ``samplers.sample``: straight-line solver loops with no
guidance, scaling or tracing code at all.  The reduction check demands that
the production path at w = 0, lambda = 1 reproduces them bit for bit under a
shared seed.

Each check returns a CheckResult; ``run_verification`` bundles the suite that
the `verify` subcommand reports as a pass/fail table.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .diagnostics import variance_inflation_check
from .discriminator import Mlp, features_for, logit_ratio_correction, loss_and_gradients
from .samplers import SAMPLER_KINDS, SamplerConfig, ScalingSchedule, sample
from .schedules import linear_beta_schedule, power_sigma_grid
from .worlds import (
    AnalyticCorrection,
    IsotropicGaussianMixture,
    MixtureScore,
    perturb_mixture,
    ring_mixture,
)

__all__ = [
    "CheckResult",
    "reference_sample",
    "check_reduction",
    "check_table1_variance",
    "check_guidance_exactness",
    "check_gradients",
    "check_solver_order",
    "run_verification",
    "DEFAULT_MC_N",
]

DEFAULT_MC_N = 100_000


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


# ==== reference samplers (no guidance / scaling code path) ==================


def reference_sample(
    kind: str,
    field,
    steps: int,
    batch: int,
    seed: int,
    sigma_min: float = 0.002,
    sigma_max: float = 80.0,
    rho: float = 7.0,
    beta_start: float = 1e-4,
    beta_end: float = 0.02,
) -> np.ndarray:
    """Plain solver loops used as the bit-identity baseline."""
    rng = np.random.default_rng(seed)
    d = field.dim
    if kind == "ancestral":
        sched = linear_beta_schedule(steps, beta_start, beta_end)
        x = rng.standard_normal((batch, d))
        for t in range(steps, 0, -1):
            abar = sched.alpha_bar(t)
            sigma_t = float(np.sqrt((1.0 - abar) / abar))
            eps = -sigma_t * field.score(x / np.sqrt(abar), sigma_t)
            z = rng.standard_normal(x.shape) if t > 1 else np.zeros_like(x)
            x = (x - (sched.beta(t) / np.sqrt(1.0 - abar)) * eps) / np.sqrt(
                sched.alpha(t)
            ) + np.sqrt(sched.posterior_beta(t)) * z
        return x

    grid = power_sigma_grid(steps, sigma_min, sigma_max, rho)
    sig = grid.sigmas
    x = sig[0] * rng.standard_normal((batch, d))
    for i in range(1, grid.node_count + 1):
        sf, st = float(sig[i - 1]), float(sig[i])
        if kind == "pf_euler":
            eps = -sf * field.score(x, sf)
            x = x + (st - sf) * eps
        elif kind == "pf_heun":
            if st == 0.0:
                eps = -sf * field.score(x, sf)
                x = x + (st - sf) * eps
            else:
                d1 = -sf * field.score(x, sf)
                x_pred = x + (st - sf) * d1
                d2 = -st * field.score(x_pred, st)
                x = x + (st - sf) * (0.5 * (d1 + d2))
        elif kind == "reverse_sde":
            z = rng.standard_normal(x.shape)
            eps = -sf * field.score(x, sf)
            x = x + (st - sf) * (2.0 * eps) + (float(np.sqrt(2.0 * sf)) * np.sqrt(sf - st)) * z
        else:
            raise ValueError(f"unknown sampler kind {kind!r}")
    return x


# ==== individual checks =====================================================


def check_reduction(corrupt_lambda: bool = False) -> CheckResult:
    """Every solver at w = 0, lambda = 1 must equal the reference bit for bit.

    `corrupt_lambda` is a mutation hook for testing the check itself: it
    nudges lambda off 1 in the production run, which must break bit identity.
    """
    real = ring_mixture()
    model = perturb_mixture(real, mean_shift=0.15, variance_scale=1.1, seed=11)
    field = MixtureScore(model)
    b = 1.0 + 1e-7 if corrupt_lambda else 1.0
    failures = []
    for kind in SAMPLER_KINDS:
        cfg = SamplerConfig(
            kind=kind, steps=12, batch=64, seed=99, scaling=ScalingSchedule(k=0.0, b=b)
        )
        got, _ = sample(cfg, field)
        ref = reference_sample(kind, field, steps=12, batch=64, seed=99)
        if not (got.shape == ref.shape and np.array_equal(got, ref)):
            failures.append(kind)
    if failures:
        return CheckResult(
            "reduction_bit_identity",
            False,
            f"reduction invariant violated: w=0, lambda=1 output differs from the "
            f"unguided reference for {', '.join(failures)}",
        )
    return CheckResult(
        "reduction_bit_identity",
        True,
        f"all {len(SAMPLER_KINDS)} solvers bit-identical to the plain reference",
    )


def check_table1_variance(n: int = DEFAULT_MC_N, seed: int = 0) -> CheckResult:
    """Monte-Carlo check of the one-step sampling variance formula.

    For each (t, e) pair the empirical Var(x_t) must sit within 3 standard
    errors of the prediction 1 - abar_t + (sqrt(abar_t) beta_{t+1} /
    (1 - abar_{t+1}) * e)^2; the SE of a Gaussian sample variance is
    Var * sqrt(2 / (n - 1)), so tolerances widen as 1/sqrt(n) automatically.
    """
    sched = linear_beta_schedule(20, 0.01, 0.2)
    pairs = [(1, 0.0), (5, 0.0), (5, 0.1), (10, 0.2), (15, 0.05), (19, 0.3)]
    worst = 0.0
    for idx, (t, e) in enumerate(pairs):
        emp, pred = variance_inflation_check(sched, t, e, n=n, seed=seed + idx)
        se = pred * np.sqrt(2.0 / (n - 1))
        ratio = abs(emp - pred) / se
        worst = max(worst, ratio)
        if ratio > 3.0:
            return CheckResult(
                "table1_variance_inflation",
                False,
                f"(t={t}, e={e}): empirical {emp:.6g} vs predicted {pred:.6g} "
                f"is {ratio:.2f} SE away (n={n})",
            )
    note = "" if n >= DEFAULT_MC_N else f"; reduced n widens tolerance by {np.sqrt(DEFAULT_MC_N / n):.2f}x"
    return CheckResult(
        "table1_variance_inflation",
        True,
        f"{len(pairs)} (t, e) pairs within 3 SE (worst {worst:.2f} SE, n={n}){note}",
    )


def check_guidance_exactness() -> CheckResult:
    """Analytic correction at w = 1 must reproduce true-score trajectories."""
    real = ring_mixture()
    model = perturb_mixture(real, mean_shift=0.25, variance_scale=1.2, seed=3)
    correction = AnalyticCorrection(real, model)
    worst = 0.0
    for kind in SAMPLER_KINDS:
        cfg = SamplerConfig(
            kind=kind, steps=15, batch=16, seed=7, w_dg_1st=1.0, w_dg_2nd=1.0, keep_states=True
        )
        guided, gtrace = sample(cfg, MixtureScore(model), correction)
        plain_cfg = replace(cfg, w_dg_1st=0.0, w_dg_2nd=0.0)
        true_run, ttrace = sample(plain_cfg, MixtureScore(real))
        diff = max(
            float(np.max(np.abs(a - b))) for a, b in zip(gtrace.states, ttrace.states)
        )
        diff = max(diff, float(np.max(np.abs(guided - true_run))))
        worst = max(worst, diff)
    passed = worst <= 1e-10
    return CheckResult(
        "guidance_exactness",
        passed,
        f"max trajectory coordinate difference {worst:.3e} (tolerance 1e-10)",
    )


def _fd_input_gradients(mlp: Mlp, x: np.ndarray, sigma: float, h: float = 1e-5) -> np.ndarray:
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            hi, lo = x.copy(), x.copy()
            hi[i, j] += h
            lo[i, j] -= h
            out[i, j] = (
                float(mlp.logits(features_for(hi[i : i + 1], sigma))[0])
                - float(mlp.logits(features_for(lo[i : i + 1], sigma))[0])
            ) / (2.0 * h)
    return out


def check_gradients(seed: int = 0) -> CheckResult:
    """Input and parameter gradients vs central finite differences (<= 1e-4 rel)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for d, hidden in ((2, (8, 8)), (3, (16, 8, 4))):
        mlp = Mlp.initialize(d + 1, hidden=hidden, seed=seed + d)
        x = rng.standard_normal((5, d))
        sigma = 0.37
        grads = logit_ratio_correction(mlp, x, sigma)
        fd = _fd_input_gradients(mlp, x, sigma)
        rel = float(np.linalg.norm(grads - fd) / np.linalg.norm(fd))
        worst = max(worst, rel)

        feats = features_for(rng.standard_normal((16, d)), 0.8)
        labels = (rng.random(16) > 0.5).astype(float)
        _, gw, gb = loss_and_gradients(mlp, feats, labels)
        h = 1e-6
        flat_bp, flat_fd = [], []
        for layer in range(len(mlp.weights)):
            w = mlp.weights[layer]
            picks = [(0, 0), (w.shape[0] - 1, w.shape[1] - 1)]
            picks += [tuple(rng.integers(0, s) for s in w.shape) for _ in range(4)]
            for ij in picks:
                orig = w[ij]
                w[ij] = orig + h
                hi = loss_and_gradients(mlp, feats, labels)[0]
                w[ij] = orig - h
                lo = loss_and_gradients(mlp, feats, labels)[0]
                w[ij] = orig
                flat_fd.append((hi - lo) / (2.0 * h))
                flat_bp.append(float(gw[layer][ij]))
            b = mlp.biases[layer]
            orig = b[0]
            b[0] = orig + h
            hi = loss_and_gradients(mlp, feats, labels)[0]
            b[0] = orig - h
            lo = loss_and_gradients(mlp, feats, labels)[0]
            b[0] = orig
            flat_fd.append((hi - lo) / (2.0 * h))
            flat_bp.append(float(gb[layer][0]))
        flat_bp = np.asarray(flat_bp)
        flat_fd = np.asarray(flat_fd)
        rel = float(np.linalg.norm(flat_bp - flat_fd) / np.linalg.norm(flat_fd))
        worst = max(worst, rel)
    passed = worst <= 1e-4
    return CheckResult(
        "gradients_vs_finite_differences",
        passed,
        f"worst relative L2 error {worst:.3e} over input and parameter gradients "
        f"(tolerance 1e-4)",
    )


def check_solver_order(seed: int = 5) -> CheckResult:
    """Terminal-error slopes on the single-Gaussian flow: Euler -1, Heun -2 (+-0.3)."""
    s0 = 1.0
    world = IsotropicGaussianMixture(weights=[1.0], means=[[0.0]], variances=[s0**2])
    field = MixtureScore(world)
    sigma_max, sigma_min, rho = 10.0, 1e-4, 7.0
    step_counts = np.array([10, 20, 40, 80, 160])
    batch = 256
    x_init = sigma_max * np.random.default_rng(seed).standard_normal((batch, 1))
    exact = x_init * np.sqrt(s0**2 / (s0**2 + sigma_max**2))
    slopes = {}
    for kind in ("pf_euler", "pf_heun"):
        errs = []
        for N in step_counts:
            cfg = SamplerConfig(
                kind=kind, steps=int(N), batch=batch, seed=seed,
                sigma_min=sigma_min, sigma_max=sigma_max, rho=rho,
            )
            samples, _ = sample(cfg, field)
            errs.append(float(np.mean(np.abs(samples - exact))))
        slopes[kind] = float(np.polyfit(np.log(step_counts), np.log(errs), 1)[0])
    ok_euler = abs(slopes["pf_euler"] - (-1.0)) <= 0.3
    ok_heun = abs(slopes["pf_heun"] - (-2.0)) <= 0.3
    return CheckResult(
        "solver_order_of_accuracy",
        ok_euler and ok_heun,
        f"log-log error slopes: Euler {slopes['pf_euler']:.3f} (target -1 +- 0.3), "
        f"Heun {slopes['pf_heun']:.3f} (target -2 +- 0.3)",
    )


def run_verification(
    n_mc: int = DEFAULT_MC_N, corrupt_lambda: bool = False, seed: int = 0
) -> list[CheckResult]:
    """The suite behind `verify`: reduction, Table 1 MC, guidance exactness,
    gradient checks, and solver order."""
    return [
        check_reduction(corrupt_lambda=corrupt_lambda),
        check_table1_variance(n=n_mc, seed=seed),
        check_guidance_exactness(),
        check_gradients(seed=seed),
        check_solver_order(),
    ]
