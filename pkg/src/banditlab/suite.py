"""Canned experiment grid mirroring the published figure set at desk scale."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, PolicySpec
from .experiment import ExperimentResult, SummaryRow, TableCache, run_experiment, write_summary
from .plotting import plot_bars, plot_series
from .policies import POLICY_NAMES
from .simulator import aggregate_replications

log = logging.getLogger(__name__)

DESK_T = 30000
FULL_T = 80001
DEFAULT_SEED = 20230
DELAYS = (10, 100, 1000)
BAR_TRAN = tuple(range(2, 11))
BAR_POLICIES = ("mud", "amud", "ducb")
TRACE_POINTS = 300


@dataclass
class Check:
    name: str
    passed: bool
    hard: bool
    detail: str


@dataclass
class SuiteResult:
    out_dir: Path
    figures: list = field(default_factory=list)
    summary_path: Path | None = None
    rows: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    final_means: dict = field(default_factory=dict)  # (experiment, policy) -> mean final loss

    @property
    def hard_failures(self):
        return [c for c in self.checks if c.hard and not c.passed]


def _policies(names):
    return tuple(PolicySpec(n) for n in names)


def suite_grid(T: int, R: int, seed: int):
    """(experiment name, config, figure kind) triples, grouped so equal environments are adjacent."""
    base = ExperimentConfig(master_seed=seed, T=T, replications=R)
    stride = max(1, T // TRACE_POINTS)
    grid = []

    def add(name, kind, **kw):
        cfg = base.with_(trace_stride=stride, **kw)
        grid.append((name, cfg.with_(env_id=f"{name}:{cfg.environment_id}"), kind))

    for d in DELAYS:
        add(f"fig2_stochastic_d{d}", "regret", tran_num=1, d_max=d)
    for d in DELAYS:
        add(f"fig3_adversarial_d{d}", "loss", tran_num=3, d_max=d)
    for tran in BAR_TRAN:
        for d in DELAYS:
            add(f"bars_d{d}_tran{tran}", "bar", tran_num=tran, d_max=d, policies=_policies(BAR_POLICIES))
    for tran in (50, 100):
        for d in (10, 100):
            add(f"fig7_8_tran{tran}_d{d}", "loss", tran_num=tran, d_max=d)
    for n, m in ((10, 100), (100, 10)):
        add(f"fig9_N{n}_M{m}", "loss", N=n, M=m, tran_num=3, d_max=10)
    return grid


def _line_figure(name, res: ExperimentResult, metric, out: Path, title, ylabel):
    cfg = res.config
    series = {}
    rounds = np.arange(1, cfg.T + 1)
    for label in res.labels():
        eps = res.by_policy(label)
        if metric == "cum_loss":
            rows = [e.trace.cum_loss for e in eps]
        else:
            rows = [e.regret.cum_regret_expected for e in eps]
        series[label] = (rounds, aggregate_replications(rows))
    return plot_series(series, out / f"{name}.svg", title=title, ylabel=ylabel)


def reproduce_paper_suite(out_dir="suite_results", *, T: int = DESK_T, R: int = 20, seed: int = DEFAULT_SEED,
                          full: bool = False, write_traces: bool = True) -> SuiteResult:
    if full:
        T = FULL_T
    if R < 2:
        raise ValueError("the suite needs at least 2 replications for its bands")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = SuiteResult(out)
    cache = TableCache()
    bars: dict = {}
    for name, cfg, kind in suite_grid(T, R, seed):
        log.info("suite: %s", name)
        res = run_experiment(cfg, out_dir=out / "traces" / name, write=write_traces, cache=cache)
        result.rows.extend(res.summary)
        for row in res.summary:
            result.final_means[(name, row.policy)] = row.mean_final_loss
        if kind == "regret":
            result.figures.append(_line_figure(
                name, res, "cum_regret_expected", out,
                f"Cumulative regret, stochastic, d_max={cfg.d_max}", "cumulative regret vs oracle"))
        elif kind == "loss":
            result.figures.append(_line_figure(
                name, res, "cum_loss", out,
                f"Cumulative loss, N={cfg.N}, M={cfg.M}, tran_num={cfg.tran_num}, d_max={cfg.d_max}",
                "cumulative loss"))
        else:
            bars[(cfg.d_max, cfg.tran_num)] = {r.policy: (r.mean_final_loss, r.std_final_loss) for r in res.summary}
    for fig_no, d in zip((4, 5, 6), DELAYS):
        series = {p: ([bars[(d, tr)][p][0] for tr in BAR_TRAN], [bars[(d, tr)][p][1] for tr in BAR_TRAN])
                  for p in BAR_POLICIES}
        result.figures.append(plot_bars(
            [str(t) for t in BAR_TRAN], series, out / f"fig{fig_no}_bars_d{d}.svg",
            title=f"Total loss vs tran_num, d_max={d}", ylabel="total loss", xlabel="tran_num"))
    result.summary_path = out / "summary.csv"
    write_summary(result.rows, result.summary_path)
    result.checks = qualitative_checks(result.final_means)
    for c in result.checks:
        if not c.passed:
            msg = f"suite check {c.name} failed: {c.detail}"
            if c.hard:
                log.error(msg)
            else:
                warnings.warn(msg)
    return result


def qualitative_checks(final_means: dict) -> list[Check]:
    """Orderings of final mean cumulative loss in the adversarial default figures."""
    d10 = lambda p: final_means[("fig3_adversarial_d10", p)]
    d1000 = lambda p: final_means[("fig3_adversarial_d1000", p)]
    checks = []
    for ours in ("mud", "amud"):
        for base in ("ducb", "se"):
            ok = d10(ours) < d10(base)
            checks.append(Check(f"{ours}<{base}@d10", ok, True, f"{ours}={d10(ours):.1f}, {base}={d10(base):.1f}"))
    gap10 = d10("ducb") - d10("mud")
    gap1000 = d1000("ducb") - d1000("mud")
    checks.append(Check("mud-vs-ducb gap shrinks at d1000", gap1000 < gap10, False,
                        f"ducb-mud gap: d10={gap10:.1f}, d1000={gap1000:.1f}"))
    return checks
