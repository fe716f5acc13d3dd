"""Run seeded AMUD episodes and tabulate per-epoch slack against the epoch lemmas.

Prints, for each d_max, how many runs violate each checker and the largest
overshoot of the missing-count bound, plus the per-epoch detail of one run.

    python scripts/lemma_audit.py --runs 50 -T 4000
"""
import argparse

import numpy as np

from banditlab.bounds import check_lemma5, check_lemma6, check_lemma7, epoch_log_from_trace, lemma5_rhs
from banditlab.environment import build_adversarial_env, build_delay_schedule
from banditlab.policies import AmudExp3
from banditlab.simulator import run_episode


def episode(N, M, T, d_max, s):
    spec = build_adversarial_env(N, M, T, 3, seed=np.random.SeedSequence(505, spawn_key=(0, d_max, s)))
    sched = build_delay_schedule(M, T, d_max, seed=np.random.SeedSequence(505, spawn_key=(1, d_max, s)))
    tr = run_episode(AmudExp3(N, M), spec, sched, T, np.random.SeedSequence(505, spawn_key=(2, d_max, s)))
    return epoch_log_from_trace(tr, sched), sched


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--runs", type=int, default=50)
    ap.add_argument("-T", type=int, default=4000)
    ap.add_argument("-N", type=int, default=10)
    ap.add_argument("-M", type=int, default=10)
    ap.add_argument("--delays", type=int, nargs="+", default=[1, 10, 100])
    args = ap.parse_args()
    N, M, T = args.N, args.M, args.T
    print("d_max,runs,lemma5_fail,lemma5_arrival_fail,lemma6_fail,lemma7_fail,max_overshoot")
    for d in args.delays:
        fails = np.zeros(4, dtype=int)
        overshoot = 0.0
        for s in range(args.runs):
            log, sched = episode(N, M, T, d, s)
            r5 = check_lemma5(log, M)
            res = [r5, check_lemma5(log, M, by_arrival=True), check_lemma6(log, M),
                   check_lemma7(log, sched.full_sum(), M, T)]
            fails += [not r.passed for r in res]
            overshoot = max([overshoot] + [v[2] - v[3] for v in r5.violations if v[1] == "right"])
        print(f"{d},{args.runs},{','.join(map(str, fails))},{overshoot:.1f}")
    log, _ = episode(N, M, T, args.delays[-1], 0)
    print("\nepoch,first,last,sum_V,bound,slack")
    for r in log.nonempty():
        rhs = lemma5_rhs(r.epoch, M)
        print(f"{r.epoch},{r.first},{r.last},{r.missing_sum},{rhs:.1f},{rhs - r.missing_sum:.1f}")


if __name__ == "__main__":
    main()
