"""Command-line harness: simulate | drift | ablate | train-disc | verify.

Exit codes: 0 success, 1 invariant or verification failure, 2 config error,
3 divergence or I/O failure.  Every command writes a run-manifest.json next
to its outputs carrying the resolved config, the seed and what was produced.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .diagnostics import NORM_AGGREGATION, ablate, epsilon_norm_sampling
from .discriminator import TrainingDivergedError, save_mlp, train
from .io import write_csv, write_json
from .samplers import DivergenceError, ScalingSchedule, nfe, sample

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftlab",
        description="Gaussian-mixture diffusion sampling lab: guided samplers, "
        "drift diagnostics, ablations and self-verification.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", default=None, help="TOML or JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--batch", type=int, default=None, help="override sample count per run")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")

    p = sub.add_parser("simulate", help="draw samples and write samples.csv + trace.csv")
    common(p)

    p = sub.add_parser("drift", help="epsilon-norm drift curves for baseline/dg/es/dg_es")
    common(p)

    p = sub.add_parser("ablate", help="guidance-weight x scaling-offset quality grid")
    common(p)

    p = sub.add_parser("train-disc", help="train the real-vs-model discriminator")
    common(p)

    p = sub.add_parser("verify", help="run the built-in oracle checks")
    common(p)
    p.add_argument("--n", type=int, default=None, help="Monte-Carlo sample count for the variance check")
    p.add_argument("--corrupt-lambda", action="store_true", help=argparse.SUPPRESS)

    return parser


def _load(args: argparse.Namespace) -> RunConfig:
    overrides = {"seed": args.seed, "out": args.out, "batch": args.batch}
    return load_config(args.config, overrides)


def _manifest(cfg: RunConfig, command: str, outputs: list[str], extra: dict | None = None) -> dict:
    doc = {
        "command": command,
        "package": "driftlab",
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.resolved(),
        "outputs": outputs,
    }
    if extra:
        doc.update(extra)
    return doc


def _schedule_provenance(sampler_cfg) -> dict:
    if sampler_cfg.kind == "ancestral":
        return {"type": "discrete", **sampler_cfg.discrete_schedule().to_json()}
    return {"type": "continuous", **sampler_cfg.continuous_grid().to_json()}


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _load(args)
    out = Path(cfg.out)
    scfg = cfg.sampler_config()
    samples, trace = sample(scfg, cfg.score_field(), cfg.correction())

    d = samples.shape[1]
    write_csv(out / "samples.csv", [f"x{j}" for j in range(d)], samples.tolist())
    write_csv(
        out / "trace.csv",
        ["step", "sigma", "mean_eps_norm"],
        list(zip(trace.steps.tolist(), trace.sigmas.tolist(), trace.mean_eps_norm.tolist())),
    )
    manifest = _manifest(
        cfg,
        "simulate",
        ["samples.csv", "trace.csv"],
        {
            "nfe": nfe(scfg),
            "schedule": _schedule_provenance(scfg),
            "norm_aggregation": NORM_AGGREGATION,
            "n_samples": int(samples.shape[0]),
            "dimension": d,
        },
    )
    write_json(out / "run-manifest.json", manifest)
    if not args.quiet:
        print(f"simulate: wrote {samples.shape[0]} samples of dim {d} to {out / 'samples.csv'}")
        print(f"simulate: solver {scfg.kind}, steps {scfg.steps}, NFE {nfe(scfg)}, seed {cfg.seed}")
    return 0


def cmd_drift(args: argparse.Namespace) -> int:
    cfg = _load(args)
    out = Path(cfg.out)
    real = cfg.world.real_mixture()
    field = cfg.score_field()
    correction = cfg.correction()
    if correction is None:
        from .worlds import AnalyticCorrection

        correction = AnalyticCorrection(real, cfg.world.model_mixture())
    w = cfg.diagnostics.dg_weight
    es_b = cfg.diagnostics.es_b
    base = cfg.sampler_config(w_dg_1st=0.0, w_dg_2nd=0.0, scaling=ScalingSchedule(k=cfg.lambda_k, b=1.0))
    variants = {
        "baseline": (base, field, None),
        "dg": (replace(base, w_dg_1st=w, w_dg_2nd=w), field, correction),
        "es": (replace(base, scaling=ScalingSchedule(k=cfg.lambda_k, b=es_b)), field, None),
        "dg_es": (
            replace(base, w_dg_1st=w, w_dg_2nd=w, scaling=ScalingSchedule(k=cfg.lambda_k, b=es_b)),
            field,
            correction,
        ),
    }
    curve = epsilon_norm_sampling(
        variants,
        training_field=field,
        world_mixture=real,
        training_n=cfg.diagnostics.training_n,
        training_seed=cfg.seed + 1,
    )
    write_csv(
        out / "drift.csv",
        ["step", "sigma", "variant", "mean_eps_norm", "stderr", "n"],
        curve.to_rows(),
    )
    manifest = _manifest(
        cfg,
        "drift",
        ["drift.csv"],
        {"norm_aggregation": NORM_AGGREGATION, "variants": list(variants) + ["training"],
         "dg_weight": w, "es_b": es_b},
    )
    write_json(out / "run-manifest.json", manifest)
    if not args.quiet:
        gaps = {name: float(np.mean(curve.gap(name))) for name in variants}
        print(f"drift: wrote {out / 'drift.csv'} ({len(curve.steps)} levels x {len(variants) + 1} curves)")
        for name, g in gaps.items():
            print(f"drift: mean (sampling - training) epsilon-norm gap, {name}: {g:+.5f}")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _load(args)
    out = Path(cfg.out)
    real = cfg.world.real_mixture()
    field = cfg.score_field()
    correction = cfg.correction()
    if correction is None:
        from .worlds import AnalyticCorrection

        correction = AnalyticCorrection(real, cfg.world.model_mixture())
    template = cfg.sampler_config()
    grid = ablate(
        template,
        field,
        correction,
        real,
        w_values=cfg.diagnostics.w_values,
        b_values=cfg.diagnostics.b_values,
        metrics=cfg.diagnostics.metrics,
        n_per_cell=cfg.diagnostics.n_per_cell,
        repeats=cfg.diagnostics.repeats,
        seed=cfg.seed,
        sw_projections=cfg.diagnostics.sw_projections,
    )
    write_csv(
        out / "ablation.csv",
        ["w_dg", "lambda_b", "metric", "value", "stderr", "status"],
        grid.to_rows(),
    )
    failed = int(np.sum(grid.status == "failed"))
    manifest = _manifest(
        cfg,
        "ablate",
        ["ablation.csv"],
        {
            "w_values": list(cfg.diagnostics.w_values),
            "b_values": list(cfg.diagnostics.b_values),
            "metrics": list(cfg.diagnostics.metrics),
            "failed_cells": failed,
        },
    )
    write_json(out / "run-manifest.json", manifest)
    if not args.quiet:
        print(f"ablate: wrote {out / 'ablation.csv'} "
              f"({len(cfg.diagnostics.w_values)}x{len(cfg.diagnostics.b_values)} grid)")
        for metric in cfg.diagnostics.metrics:
            w_best, b_best = grid.argmin(metric)
            print(
                f"ablate: best {metric} = {grid.cell(metric, w_best, b_best)[0]:.5f} at "
                f"w_dg={w_best}, lambda_b={b_best}"
            )
    if failed:
        print(f"ablate: warning: {failed} cell(s) diverged and were marked 'failed'", file=sys.stderr)
    return 0


def cmd_train_disc(args: argparse.Namespace) -> int:
    cfg = _load(args)
    out = Path(cfg.out)
    real = cfg.world.real_mixture()
    model = cfg.world.model_mixture()
    mlp = train(real, model, config=cfg.train)
    weights_path = out / cfg.weights_out
    save_mlp(mlp, weights_path)
    log = mlp.log
    rows = []
    for i, loss in enumerate(log.epoch_losses, start=1):
        final = i == len(log.epoch_losses)
        rows.append(
            (
                i,
                loss,
                log.holdout_accuracy if final else float("nan"),
                log.mean_abs_logit if final else float("nan"),
            )
        )
    write_csv(out / "training-log.csv", ["epoch", "loss", "holdout_accuracy", "mean_abs_logit"], rows)
    manifest = _manifest(
        cfg,
        "train-disc",
        [str(cfg.weights_out), "training-log.csv"],
        {
            "holdout_accuracy": log.holdout_accuracy,
            "mean_abs_logit": log.mean_abs_logit,
            "final_loss": log.epoch_losses[-1],
            "epochs": len(log.epoch_losses),
        },
    )
    write_json(out / "run-manifest.json", manifest)
    if not args.quiet:
        print(f"train-disc: wrote weights to {weights_path}")
        print(
            f"train-disc: final loss {log.epoch_losses[-1]:.5f}, "
            f"held-out accuracy {log.holdout_accuracy:.4f}, "
            f"mean |logit| {log.mean_abs_logit:.3f}"
        )
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    from .verification import DEFAULT_MC_N, run_verification

    n_mc = args.n if args.n is not None else DEFAULT_MC_N
    seed = args.seed if args.seed is not None else 0
    results = run_verification(n_mc=n_mc, corrupt_lambda=args.corrupt_lambda, seed=seed)
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {status}  {r.detail}")
    if n_mc < DEFAULT_MC_N and not args.quiet:
        print(f"note: --n {n_mc} < {DEFAULT_MC_N}; Monte-Carlo tolerances widened accordingly")
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"verify: {len(failed)} of {len(results)} checks FAILED", file=sys.stderr)
        return 1
    print(f"verify: all {len(results)} checks passed")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "drift": cmd_drift,
    "ablate": cmd_ablate,
    "train-disc": cmd_train_disc,
    "verify": cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 3
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
