"""Command-line entry point: ``banditlab run | suite | bounds``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, ExperimentConfig, load_config

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed {text} outside [0, 2^64)")
    return value


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors, not runtime failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="banditlab", description="Delayed-feedback adversarial bandit simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", help="output directory (overrides run.output_dir)")
    run.add_argument("--seed", type=_u64, help="master seed (overrides master_seed)")
    run.add_argument("--plot", action="store_true", help="also write a cumulative-loss SVG")

    suite = sub.add_parser("suite", help="run the canned figure grid")
    suite.add_argument("--full", action="store_true", help="use the long horizon T=80001")
    suite.add_argument("--out", default="suite_results")
    suite.add_argument("--seed", type=_u64, default=None)
    suite.add_argument("--replications", type=int, default=20)
    suite.add_argument("-T", "--horizon", type=int, default=None, help="override the desk-scale horizon")
    suite.add_argument("--check", action="store_true", help="exit 3 when a hard ordering check fails")

    bounds = sub.add_parser("bounds", help="print regret-bound values for a config")
    bounds.add_argument("--config", required=True)
    return parser


def cmd_run(args) -> int:
    from .experiment import run_experiment
    from .plotting import emit_plot

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_(master_seed=args.seed)
    if args.out:
        cfg = cfg.with_(output_dir=args.out)
    result = run_experiment(cfg)
    if args.plot:
        emit_plot(result.trace_path, "cum_loss", result.trace_path.with_name("cum_loss.svg"))
    for row in result.summary:
        print(f"{row.policy:<12} mean_final_loss={row.mean_final_loss:.3f} std={row.std_final_loss:.3f} "
              f"regret={row.mean_final_regret:.3f}")
    print(f"wrote {result.trace_path} and {result.summary_path}")
    return EXIT_OK


def cmd_suite(args) -> int:
    from .suite import DEFAULT_SEED, DESK_T, reproduce_paper_suite

    if args.replications < 2:
        raise ConfigError("invalid range: suite replications must be >= 2")
    seed = DEFAULT_SEED if args.seed is None else args.seed
    result = reproduce_paper_suite(args.out, T=args.horizon or DESK_T, R=args.replications, seed=seed, full=args.full)
    print(f"wrote {len(result.figures)} figures and {result.summary_path}")
    for c in result.checks:
        status = "PASS" if c.passed else ("FAIL" if c.hard else "WARN")
        print(f"[{status}] {c.name}: {c.detail}")
    if args.check and result.hard_failures:
        return EXIT_CHECK
    return EXIT_OK


def cmd_bounds(args) -> int:
    from . import bounds as B
    from .experiment import build_delays, mud_eta
    from .policies import truncate_learning_rate

    cfg: ExperimentConfig = load_config(args.config)
    print("replication,sum_delivered_delays,full_delay_sum,omega,eta,theorem1_bound,theorem2_bound")
    for r in range(1, cfg.replications + 1):
        sched = build_delays(cfg, r)
        eta = mud_eta(cfg, sched, {})
        eta_t = truncate_learning_rate(eta, cfg.M, cfg.N, cfg.effective_delta)
        inputs = B.BoundInputs(cfg.N, cfg.M, cfg.T, eta_t, sched.delivered_sum(), sched.omega_count(),
                               sched.full_sum())
        b2 = B.theorem2_bound(cfg.N, cfg.M, cfg.T, sched.full_sum())
        print(f"{r},{inputs.sum_delivered_delays},{inputs.full_delay_sum},{inputs.omega_count},"
              f"{eta_t!r},{B.theorem1_bound(inputs)!r},{b2!r}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "suite": cmd_suite, "bounds": cmd_bounds}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failure past validation is a runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
