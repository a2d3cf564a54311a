"""Concentration checks and theorem-bound feasibility on a chosen environment."""
import argparse
from pathlib import Path

from mflocal.experiments import ExperimentConfig, run_bound_verification


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", type=Path, default=Path(__file__).parents[1] / "configs" / "default.json")
    parser.add_argument("--env", choices=["firm", "random", "identity"], default="random")
    parser.add_argument("--out", type=Path, default=Path("out/bound_checks"))
    parser.add_argument("--trials", type=int)
    args = parser.parse_args()

    d = ExperimentConfig.load(args.config).to_dict()
    d["env"]["name"] = args.env
    cfg = ExperimentConfig.from_dict(d)
    rows = run_bound_verification(cfg, args.out, trials=args.trials)
    for r in rows:
        if r["kind"] == "lemma" and r["t"] in (0, cfg.bounds.horizon // 2, cfg.bounds.horizon):
            status = "pass" if r["passed"] else "FAIL"
            print(f"{r['name']:8s} N={r['N']:<5} t={r['t']:<3} mean {r['empirical_mean']:.4f}"
                  f" bound {r['bound']:.4f}  {status}")
        elif r["kind"] != "lemma":
            print(f"{r['name']:20s} N={r['N']!s:<5} value {r['bound'] if r['bound'] != '' else r['empirical_mean']}")


if __name__ == "__main__":
    main()
