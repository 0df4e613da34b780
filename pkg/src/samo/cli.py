"""Command-line entry point: train, eval, aggregate and trace."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from samo.envs import ENV_NAMES
from samo.errors import ConfigError
from samo.harness import aggregate_curves, evaluate, parse_config, run_experiment, trace


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="samo", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="cmd", required=True)

    t = sub.add_parser("train", help="train options for every seed in a config")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, action="append",
                   help="run only this seed (repeatable); default: run.seeds")
    t.add_argument("--out", required=True, help="run directory")
    t.add_argument("--fresh", action="store_true", help="ignore existing checkpoints")

    e = sub.add_parser("eval", help="evaluate a checkpoint with the execution cascade")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--env", choices=ENV_NAMES, help="default: the env stored in the checkpoint")
    e.add_argument("--episodes", type=int, default=100)
    e.add_argument("--greedy", action="store_true", help="use mean / argmax actions")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--t-min", type=int, help="override the stored minimum option duration")

    a = sub.add_parser("aggregate", help="mean and half-std learning curves across seeds")
    a.add_argument("--runs", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--window", type=int, default=5000, help="env steps per bucket")

    r = sub.add_parser("trace", help="export one episode as a CSV trajectory")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--env", choices=ENV_NAMES)
    r.add_argument("--seed", type=int, default=0)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        if args.cmd == "train":
            cfg = parse_config(args.config)
            summary = run_experiment(cfg, args.out, seeds=args.seed, resume=not args.fresh)
            for s in summary["seeds"]:
                print(f"seed {s['seed']}: {s['episodes']} episodes, {s['options']} options, "
                      f"final-window mean length {s['final_window_mean_length']:.1f}")
        elif args.cmd == "eval":
            report = evaluate(args.checkpoint, args.env, args.episodes, args.greedy, args.seed,
                              args.t_min)
            print(json.dumps(report, indent=2))
        elif args.cmd == "aggregate":
            rows = aggregate_curves(args.runs, args.window, args.out)
            print(f"wrote {len(rows)} buckets to {args.out}")
        elif args.cmd == "trace":
            n = trace(args.checkpoint, args.out, args.env, args.seed)
            print(f"wrote {n} steps to {args.out}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
