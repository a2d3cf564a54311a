"""Global-vs-local error as a function of population size and of the number of quality levels.

Writes sweep_n.csv and sweep_q.csv under --out and prints the summary rows.
"""
import argparse
import dataclasses
from pathlib import Path

from mflocal.experiments import ExperimentConfig, run_error_sweep


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", type=Path, default=Path(__file__).parents[1] / "configs" / "default.json")
    parser.add_argument("--out", type=Path, default=Path("out/error_sweeps"))
    parser.add_argument("--seeds", type=int, help="override the number of seeds")
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()

    cfg = ExperimentConfig.load(args.config)
    if args.seeds:
        cfg = dataclasses.replace(cfg, sweep=dataclasses.replace(cfg.sweep, seeds=args.seeds))
    for sweep in ("n", "q"):
        rows = run_error_sweep(cfg, sweep, args.out, threads=args.threads)
        for r in rows:
            if r["row_type"] == "summary":
                print(f"{r['sweep_var']}={r['sweep_value']:>4}  error {r['error']:.4e} +- {r['error_std']:.4e}"
                      f"  thm1 {r['theorem1_bound']}  thm2 {r['theorem2_bound']}")


if __name__ == "__main__":
    main()
