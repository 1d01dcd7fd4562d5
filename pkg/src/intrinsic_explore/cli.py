"""Command-line entry point: ``train``, ``suite`` and ``analyze``."""
from __future__ import annotations

import argparse
import logging
import sys

from .agent import AgentKind
from .grid_env import EnvKind
from .harness import RunConfig, load_summaries, run_single, run_suite
from .stats import analyze


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part.strip()]


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--env", required=True, choices=[k.value for k in EnvKind])
    p.add_argument("--agent", required=True, choices=[k.value for k in AgentKind])
    p.add_argument("--frames", type=int, default=None, help="frame budget (default depends on env)")
    p.add_argument("--beta", type=float, default=None, help="intrinsic reward scale")
    p.add_argument("--hidden", type=int, default=None, help="hidden units of the variational models")
    p.add_argument("--latent", type=int, default=None, help="latent dimensions of the variational models")
    p.add_argument("--rollout", type=int, default=128, help="frames per update")
    p.add_argument("--out", default="runs", help="output directory")


def _config(args, seed: int) -> RunConfig:
    return RunConfig.default(args.env, args.agent, seed=seed, frame_budget=args.frames, out_dir=args.out,
                             beta=args.beta, model_hidden=args.hidden, latent_dim=args.latent,
                             rollout_length=args.rollout)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="intrinsic-explore")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train one agent on one environment")
    _add_run_args(train)
    train.add_argument("--seed", type=int, default=0)

    suite = sub.add_parser("suite", help="train one agent over several seeds")
    _add_run_args(suite)
    suite.add_argument("--seeds", type=_int_list, required=True, help="comma-separated seeds")
    suite.add_argument("--workers", type=int, default=1)

    an = sub.add_parser("analyze", help="summary table and t-tests from run summaries")
    an.add_argument("--in", dest="in_dir", required=True, help="directory of *_summary.txt files")
    an.add_argument("--drop-runs", type=_int_list, default=None,
                    help="0-based run indices (ascending seed order) to drop in the starred reanalysis")
    an.add_argument("--welch", action="store_true", help="Welch degrees of freedom instead of pooled")
    an.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    if args.command == "train":
        summary = run_single(_config(args, args.seed))
        print(f"{summary.env} {summary.agent} seed={summary.seed} status={summary.status} "
              f"time_to_success={summary.time_to_success}")
        return 0 if summary.status == "finished" else 1
    if args.command == "suite":
        summaries = run_suite(_config(args, args.seeds[0]), args.seeds, workers=args.workers)
        for s in summaries:
            print(f"seed={s.seed} status={s.status} time_to_success={s.time_to_success}")
        return 0 if all(s.status == "finished" for s in summaries) else 1
    report = analyze(load_summaries(args.in_dir), drop_runs=args.drop_runs, welch=args.welch)
    report.write(args.out)
    sys.stdout.write(report.to_text())
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
