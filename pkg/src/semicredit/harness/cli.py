"""Command-line front end: train, evaluate, credit-report, and plot."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..errors import ConfigError, ContractError, TrainAbort
from .config import TrainConfig, load_config
from .plotting import discover_runs, plot_learning_curves
from .report import credit_report_for_checkpoint, evaluate_checkpoint
from .train import train


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semicredit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run training for one or more seeds")
    p_train.add_argument("--config", type=Path, help="key=value config file")
    p_train.add_argument("--env", help="environment id")
    p_train.add_argument("--method", help="credit method")
    p_train.add_argument("--seed", type=int, help="single seed")
    p_train.add_argument("--seeds", help="comma-separated seeds (overrides --seed)")
    p_train.add_argument("--iters", type=int, dest="iterations")
    p_train.add_argument("--steps", type=int, dest="steps_per_iteration")
    p_train.add_argument("--samples", type=int, dest="samples_per_agent")
    p_train.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    p_train.add_argument("--out", help="root directory for run folders")

    p_eval = sub.add_parser("evaluate", help="score a stored checkpoint deterministically")
    target = p_eval.add_mutually_exclusive_group(required=True)
    target.add_argument("--ckpt", type=Path, help="checkpoint directory")
    target.add_argument("--run", type=Path, help="run directory (uses its final checkpoint)")
    p_eval.add_argument("--checkpoint", default="final", help="checkpoint name inside --run")
    p_eval.add_argument("--env", default=None, help="environment id, verified against the checkpoint")
    p_eval.add_argument("--episodes", type=int, default=10)
    p_eval.add_argument("--seed", type=int, default=0)

    p_credit = sub.add_parser("credit-report", help="export per-agent credit along an evaluation rollout")
    target = p_credit.add_mutually_exclusive_group(required=True)
    target.add_argument("--ckpt", type=Path, help="checkpoint directory")
    target.add_argument("--run", type=Path, help="run directory (uses its final checkpoint)")
    p_credit.add_argument("--checkpoint", default="final", help="checkpoint name inside --run")
    p_credit.add_argument("--env", default=None, help="environment id, verified against the checkpoint")
    p_credit.add_argument("--out", type=Path, required=True, help="output CSV path")
    p_credit.add_argument("--steps", type=int, default=None, help="rollout length (default: one episode horizon)")
    p_credit.add_argument("--samples", type=int, default=None, help="coalition samples per agent")
    p_credit.add_argument("--seed", type=int, default=0)

    p_plot = sub.add_parser("plot", help="aggregate run logs into a learning-curve figure")
    p_plot.add_argument("runs", nargs="+", type=Path, help="run directories, or roots holding <method>_s<seed> folders")
    p_plot.add_argument("--out", type=Path, required=True, help="output PNG path")
    p_plot.add_argument("--column", default="mean_episode_reward")
    p_plot.add_argument("--title", default=None)
    return parser


def _cmd_train(args) -> int:
    base = load_config(args.config) if args.config else TrainConfig()
    overrides = {}
    for key in ("env", "method", "iterations", "steps_per_iteration", "samples_per_agent", "checkpoint_every", "out"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if args.seeds is not None:
        try:
            seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"bad --seeds {args.seeds!r}") from None
        if not seeds:
            raise ConfigError("--seeds named no seeds")
    elif args.seed is not None:
        seeds = [args.seed]
    else:
        seeds = [base.seed]
    for seed in seeds:
        config = base.with_overrides(seed=seed, **overrides)
        result = train(config)
        print(
            f"{config.run_name}: {result.iterations_completed} iterations, "
            f"{result.wall_clock:.1f}s, log at {result.runlog_path}"
        )
    return 0


def _resolve_checkpoint(args) -> Path:
    if args.ckpt is not None:
        return args.ckpt
    target = args.run / "checkpoints" / args.checkpoint
    if not target.exists():
        raise ContractError(f"{args.run} has no checkpoint {args.checkpoint!r}")
    return target


def _cmd_evaluate(args) -> int:
    result = evaluate_checkpoint(_resolve_checkpoint(args), env_id=args.env, episodes=args.episodes, seed=args.seed)
    print(f"episodes: {len(result.episode_rewards)}")
    print(f"mean_reward: {result.mean_reward:.6g}")
    print(f"std_reward: {result.std_reward:.6g}")
    print("mean_abs_action: " + " ".join("%.4g" % v for v in result.mean_abs_action))
    return 0


def _cmd_credit_report(args) -> int:
    psi = credit_report_for_checkpoint(
        _resolve_checkpoint(args),
        args.out,
        steps=args.steps,
        seed=args.seed,
        samples_per_agent=args.samples,
        env_id=args.env,
    )
    print(f"wrote {args.out} ({psi.shape[0]} timesteps, {psi.shape[1]} agents)")
    print("mean_psi: " + " ".join("%.6g" % v for v in psi.mean(axis=0)))
    return 0


def _cmd_plot(args) -> int:
    grouped: dict[str, list[Path]] = {}
    for entry in args.runs:
        if (entry / "runlog.csv").exists():
            label = entry.name.rsplit("_s", 1)[0]
            grouped.setdefault(label, []).append(entry / "runlog.csv")
        else:
            for label, paths in discover_runs(entry).items():
                grouped.setdefault(label, []).extend(paths)
    out = plot_learning_curves(grouped, args.out, column=args.column, title=args.title)
    print(f"wrote {out} and {out.with_suffix('.csv')}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "train": _cmd_train,
        "evaluate": _cmd_evaluate,
        "credit-report": _cmd_credit_report,
        "plot": _cmd_plot,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, ContractError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except TrainAbort as err:
        print(f"training aborted: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
