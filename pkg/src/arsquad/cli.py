"""Command-line entry points: ``arsquad train|sweep|replay|plot``.

Exit codes: 0 success, 1 I/O failure, 2 bad arguments or malformed input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from arsquad import artifacts
from arsquad.task import TaskConfig, TaskKind
from arsquad.trainer import RunConfig, rollout, seed_sweep, train


def _target(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"target must be X,Y,Z numbers, got {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"target must have three components, got {text!r}")
    return parts


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--iterations", type=int, help="ARS iterations (default 200)")
    p.add_argument("--episode-length", type=int, help="max steps per rollout (default 1000)")
    p.add_argument("--lr", type=float, help="step size beta (default 0.01)")
    p.add_argument("--n-directions", type=int, help="directions per iteration N (default 16)")
    p.add_argument("--top-directions", type=int, help="directions kept for the update b (default 4)")
    p.add_argument("--noise-std", type=float, help="exploration noise std nu (default 0.1)")
    p.add_argument("--action-scale", type=float, help="rotor rev/s per action unit kappa (default 3)")
    p.add_argument("--eval-every", type=int, help="iterations between evaluation episodes (default 1)")
    _add_task_flags(p)
    p.add_argument("--config", type=Path, help="JSON run config; its values override flags")
    p.add_argument("--threads", type=int, default=1, help="rollout workers (does not change results)")
    p.add_argument("--save-noise", action="store_true", help="also write the noise table to noise.bin")


def _add_task_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--task", choices=[k.value for k in TaskKind], help="hover (default) or takeoff")
    p.add_argument("--runtime", type=float, help="episode time limit in seconds (default 5)")
    p.add_argument("--target", type=_target, help="target position X,Y,Z")


def _task_from_args(args, base: TaskConfig) -> TaskConfig:
    task = base
    if args.task == TaskKind.TAKEOFF.value:
        task = replace(task, task_kind=TaskKind.TAKEOFF, target=(0.0, 0.0, 150.0))
    elif args.task == TaskKind.HOVER.value:
        task = replace(task, task_kind=TaskKind.HOVER)
    if args.runtime is not None:
        task = replace(task, runtime=args.runtime)
    if args.target is not None:
        task = task.with_target(args.target)
    return task


def config_from_args(args) -> RunConfig:
    hp = RunConfig().hyperparams
    hp_updates = {
        "num_iterations": args.iterations,
        "episode_length": args.episode_length,
        "step_size": args.lr,
        "num_directions": args.n_directions,
        "top_directions": args.top_directions,
        "noise_std": args.noise_std,
    }
    hp = replace(hp, **{k: v for k, v in hp_updates.items() if v is not None})
    updates = {"hyperparams": hp, "task": _task_from_args(args, TaskConfig())}
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if args.action_scale is not None:
        updates["action_scale"] = args.action_scale
    if args.eval_every is not None:
        updates["eval_every"] = args.eval_every
    if args.save_noise:
        updates["save_noise"] = True
    config = replace(RunConfig(), **updates)
    if args.config is not None:
        config = artifacts.load_config(args.config, base=config)
    return replace(config, out_dir=args.out, workers=args.threads)


def cmd_train(args) -> int:
    config = config_from_args(args)
    result = train(config)
    evals = [r.eval_reward for r in result.records if r.eval_reward is not None]
    if evals:
        print(f"final eval reward {evals[-1]:.4f} (best {max(evals):.4f}); artifacts in {config.out_dir}")
    else:
        print(f"no iterations run; artifacts in {config.out_dir}")
    return 0


def cmd_sweep(args) -> int:
    config = config_from_args(args)
    results = seed_sweep(config, args.num_seeds, args.sweep_seed)
    print(f"trained seeds {sorted(results)}; summary in {Path(config.out_dir) / 'summary.csv'}")
    return 0


def cmd_replay(args) -> int:
    M, stats = artifacts.load_policy(args.policy)
    if args.config is not None:
        config = artifacts.load_config(args.config)
    else:
        config = RunConfig()
    config = replace(config, task=_task_from_args(args, config.task))
    if args.action_scale is not None:
        config = replace(config, action_scale=args.action_scale)
    if args.episode_length is not None:
        config = replace(config, hyperparams=replace(config.hyperparams, episode_length=args.episode_length))
    if M.shape != (4, 12):
        raise artifacts.SchemaError(f"{args.policy}: policy must be 4x12, got {M.shape[0]}x{M.shape[1]}")
    total, trace, _ = rollout(M, None, 0, config.hyperparams.noise_std, stats, config)
    artifacts.write_trace(trace, args.out)
    print(f"replayed {len(trace)} steps, total reward {total:.4f}, ended by {trace.done_reason.value}")
    return 0


def cmd_plot(args) -> int:
    svg = artifacts.PLOTTERS[args.kind](args.input)
    args.out.write_text(svg, encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arsquad", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress per iteration")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a linear hover/takeoff policy")
    _add_run_flags(p)
    p.add_argument("--out", type=Path, default=Path("runs/latest"), help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="train over distinct seeds drawn from [0, 1000)")
    _add_run_flags(p)
    p.add_argument("--num-seeds", type=int, required=True, help="number of distinct seeds")
    p.add_argument("--sweep-seed", type=int, default=0, help="seed for drawing the run seeds")
    p.add_argument("--out", type=Path, default=Path("runs/sweep"), help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("replay", help="fly one noiseless episode with a saved policy")
    p.add_argument("policy", type=Path, help="final_policy.json")
    _add_task_flags(p)
    p.add_argument("--config", type=Path, help="run config supplying plant, task and action scale")
    p.add_argument("--action-scale", type=float, help="rotor rev/s per action unit kappa")
    p.add_argument("--episode-length", type=int, help="max steps in the episode")
    p.add_argument("--out", type=Path, default=Path("trace.csv"), help="trace CSV to write")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("plot", help="render a rewards or trace CSV as SVG")
    p.add_argument("kind", choices=sorted(artifacts.PLOTTERS), help="rewards takes rewards.csv, the others a trace CSV")
    p.add_argument("input", type=Path, help="CSV to plot")
    p.add_argument("--out", type=Path, required=True, help="SVG file to write")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (artifacts.SchemaError, ValueError, json.JSONDecodeError) as exc:
        print(f"arsquad: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"arsquad: I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
