"""Train the neural mean-field policy on the firm environment and compare it with the uniform policy."""
import argparse
from pathlib import Path

import numpy as np

from mflocal.firm import FirmConfig, firm_model
from mflocal.npg import MLPPolicy, TrainerConfig, save_checkpoint, train, write_training_curve


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--Q", type=int, default=5)
    parser.add_argument("--gamma", type=float, default=0.9)
    parser.add_argument("--J", type=int, default=100)
    parser.add_argument("--L", type=int, default=100)
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--out", type=Path, default=Path("out/train_firm"))
    args = parser.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    model = firm_model(FirmConfig(args.Q))
    margins = []
    for seed in range(args.seeds):
        cfg = TrainerConfig(J=args.J, L=args.L, gamma=args.gamma, seed=seed)
        res = train(cfg, model)
        margins.append(res.best_value - res.uniform_value)
        print(f"seed {seed}: initial {res.initial_value:.4f}  best {res.best_value:.4f} (iter {res.best_index + 1})"
              f"  average {res.average_value:.4f}  uniform {res.uniform_value:.4f}")
        write_training_curve(args.out / f"curve_seed{seed}.csv", res)
        best = MLPPolicy(args.Q, 2, cfg.hidden, res.params[res.best_index])
        save_checkpoint(args.out / f"checkpoint_seed{seed}.json", best, cfg)
    print(f"beats uniform in {int(np.sum(np.array(margins) > 0))}/{args.seeds} seeds")


if __name__ == "__main__":
    main()
