"""Command-line driver: ``mflocal <subcommand> [--config PATH] [--seed N] [--out DIR] ...``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .experiments import (ExperimentConfig, build_model, run_bound_verification, run_decentralized_demo,
                          run_error_sweep)
from .npg import MLPPolicy, save_checkpoint, train, write_training_curve

SUBCOMMANDS = ("train", "sweep-n", "sweep-q", "verify-bounds", "demo-decentralized")


def u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mflocal", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON experiment config (defaults used if omitted)")
        p.add_argument("--seed", type=u64, help="override the config seed")
        p.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
        p.add_argument("--episodes", type=positive, help="Monte-Carlo episodes / trials per cell")
        p.add_argument("--threads", type=positive, default=1, help="worker processes for sweep cells")
        p.add_argument("--json", action="store_true", help="also write a JSON mirror of the CSV")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.episodes is not None:
        cfg = dataclasses.replace(cfg, evaluation=dataclasses.replace(cfg.evaluation, episodes=args.episodes))
    if args.out is not None:
        cfg = dataclasses.replace(cfg, output=dataclasses.replace(cfg.output, dir=str(args.out)))
    if args.json:
        cfg = dataclasses.replace(cfg, output=dataclasses.replace(cfg.output, json=True))
    return cfg


def cmd_train(cfg: ExperimentConfig, out: Path) -> dict:
    model = build_model(cfg.env)
    tcfg = cfg.trainer_config(cfg.seed)
    result = train(tcfg, model, log=lambda j, v: print(f"iter {j:4d}  v_mf={v:.6f}", file=sys.stderr))
    policy = MLPPolicy(model.num_states, model.num_actions, tcfg.hidden, result.params[result.best_index])
    ckpt = Path(cfg.trainer.checkpoint) if cfg.trainer.checkpoint else out / "checkpoint.json"
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, policy, tcfg, {"best_index": result.best_index, "best_value": result.best_value,
                                         "uniform_value": result.uniform_value, "env": model.name})
    write_training_curve(out / "training_curve.csv", result)
    return {"checkpoint": str(ckpt), "best_value": result.best_value, "initial_value": result.initial_value,
            "uniform_value": result.uniform_value}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (ValueError, TypeError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.dumps())
    try:
        if args.command == "train":
            summary = cmd_train(cfg, out)
        elif args.command in ("sweep-n", "sweep-q"):
            rows = run_error_sweep(cfg, args.command[-1], out, threads=args.threads)
            summary = {"rows": len(rows), "csv": str(out / f"sweep_{args.command[-1]}.csv")}
        elif args.command == "verify-bounds":
            rows = run_bound_verification(cfg, out, trials=args.episodes)
            lemma_rows = [r for r in rows if r["kind"] == "lemma"]
            summary = {"lemma_rows": len(lemma_rows), "lemma_failures": sum(not r["passed"] for r in lemma_rows),
                       "csv": str(out / "verify_bounds.csv")}
        else:
            trace = run_decentralized_demo(cfg, out_dir=out)
            summary = {key: trace[key] for key in ("return", "flows_identical", "matches_compute_flow",
                                                    "policy_saw_only_local_flow")}
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
