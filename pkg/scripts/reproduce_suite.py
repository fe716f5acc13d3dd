"""Run the canned figure grid and print the ordering checks.

    python scripts/reproduce_suite.py --out suite_results [--full] [-R 20]
"""
import argparse
import logging

from banditlab.suite import DEFAULT_SEED, DESK_T, reproduce_paper_suite


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="suite_results")
    ap.add_argument("--full", action="store_true")
    ap.add_argument("-T", type=int, default=DESK_T)
    ap.add_argument("-R", type=int, default=20)
    ap.add_argument("--seed", type=int, default=DEFAULT_SEED)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    res = reproduce_paper_suite(args.out, T=args.T, R=args.R, seed=args.seed, full=args.full)
    for fig in res.figures:
        print(fig)
    for c in res.checks:
        print(f"{'hard' if c.hard else 'soft'} {c.name}: {'pass' if c.passed else 'fail'} ({c.detail})")


if __name__ == "__main__":
    main()
