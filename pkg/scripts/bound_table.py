"""Empirical mean regret against the closed-form bounds over a grid of delays.

    python scripts/bound_table.py -T 5000 -R 20
"""
import argparse

import numpy as np

from banditlab.config import ExperimentConfig, PolicySpec
from banditlab.experiment import run_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("-T", type=int, default=5000)
    ap.add_argument("-R", type=int, default=20)
    ap.add_argument("--delays", type=int, nargs="+", default=[1, 10, 100, 1000])
    ap.add_argument("--seed", type=int, default=606)
    args = ap.parse_args()
    print("policy,d_max,mean_regret,std_regret,min_bound,mean_bound,ratio")
    for d in args.delays:
        cfg = ExperimentConfig(master_seed=args.seed, T=args.T, d_max=d, replications=args.R,
                               policies=(PolicySpec("mud"), PolicySpec("amud")))
        res = run_experiment(cfg, write=False, keep_traces=False)
        for label in res.labels():
            eps = res.by_policy(label)
            reg = np.array([e.regret.regret_hindsight for e in eps])
            b = np.array([e.bound for e in eps])
            print(f"{label},{d},{reg.mean():.1f},{reg.std(ddof=1):.1f},{b.min():.1f},{b.mean():.1f},"
                  f"{reg.mean() / b.min():.4f}")


if __name__ == "__main__":
    main()
