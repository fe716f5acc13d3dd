"""Seeded replication runner and CSV writers."""
from __future__ import annotations

import hashlib
import logging
import os
import time
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bounds as B
from . import policies as P
from .config import ExperimentConfig, PolicySpec
from .environment import (DelaySchedule, LossRealization, SegmentedLossSpec, build_adversarial_env,
                          build_delay_schedule, expected_loss_matrix, loss_key, table_totals)
from .simulator import RegretReport, RunTrace, compute_regret, run_episode

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("policy", "replication", "round", "arm", "delivered_count", "v_t", "epoch", "eta",
                 "round_loss", "cum_loss", "cum_regret_hindsight", "cum_regret_expected")
SUMMARY_COLUMNS = ("policy", "env_id", "T", "d_max", "tran_num", "R", "mean_final_loss", "std_final_loss",
                   "mean_final_regret", "theorem_bound", "bound_margin")

_PURPOSE = {"env": 0, "delay": 1, "loss": 2, "policy": 3}


class OutputError(RuntimeError):
    pass


def stream(master_seed: int, purpose: str, *ids: int) -> np.random.SeedSequence:
    """Independent seed stream for one (purpose, ids) pair of an experiment."""
    return np.random.SeedSequence(master_seed, spawn_key=(_PURPOSE[purpose], *ids))


@dataclass
class Replication:
    index: int
    spec: SegmentedLossSpec
    schedule: DelaySchedule
    key: int
    table: np.ndarray
    totals: np.ndarray
    expected: np.ndarray


class TableCache:
    """Byte-bounded LRU of materialised loss tables, shared across experiments."""

    def __init__(self, max_bytes: int = 1_500_000_000):
        self.max_bytes = max_bytes
        self._items: OrderedDict = OrderedDict()
        self._bytes = 0

    def get(self, key, build):
        if key in self._items:
            self._items.move_to_end(key)
            return self._items[key]
        value = build()
        size = sum(a.nbytes for a in value)
        if size <= self.max_bytes:
            self._items[key] = value
            self._bytes += size
            while self._bytes > self.max_bytes:
                _, old = self._items.popitem(last=False)
                self._bytes -= sum(a.nbytes for a in old)
        return value


def build_delays(cfg: ExperimentConfig, r: int) -> DelaySchedule:
    if cfg.delay_kind == "custom":
        table = np.loadtxt(cfg.delay_table, delimiter=",", dtype=np.int64, ndmin=2)
        if table.shape != (cfg.T, cfg.M):
            raise ValueError(f"custom delay table has shape {table.shape}, expected {(cfg.T, cfg.M)}")
        return DelaySchedule(table, cfg.d_max)
    return build_delay_schedule(cfg.M, cfg.T, cfg.d_max, stream(cfg.master_seed, "delay", r),
                                kind=cfg.delay_kind, geometric_p=cfg.geometric_p)


def build_replication(cfg: ExperimentConfig, r: int, cache: TableCache | None = None) -> Replication:
    spec = build_adversarial_env(cfg.N, cfg.M, cfg.T, cfg.tran_num, stream(cfg.master_seed, "env", r))
    schedule = build_delays(cfg, r)
    key = loss_key(stream(cfg.master_seed, "loss", r))

    def make():
        table = LossRealization(spec, key).table()
        return table, table_totals(table)

    ident = (cfg.master_seed, cfg.N, cfg.M, cfg.T, cfg.tran_num, r)
    table, totals = cache.get(ident, make) if cache is not None else make()
    return Replication(r, spec, schedule, key, table, totals, expected_loss_matrix(spec))


def mud_eta(cfg: ExperimentConfig, schedule: DelaySchedule, params: dict) -> float:
    if "eta" in params:
        return float(params["eta"])
    if not isinstance(cfg.eta_mode, str):
        return float(cfg.eta_mode)
    if cfg.eta_mode == "recommended_exact":
        sum_d = schedule.delivered_sum()
    else:
        sum_d = cfg.T * cfg.M * (cfg.d_max + 1) / 2
    return P.recommended_eta(cfg.N, cfg.M, cfg.T, sum_d)


def make_policy(pspec: PolicySpec, cfg: ExperimentConfig, rep: Replication) -> P.Policy:
    name = pspec.name
    if name == "mud":
        delta = int(pspec.params.get("delta", cfg.effective_delta))
        return P.MudExp3(cfg.N, cfg.M, mud_eta(cfg, rep.schedule, pspec.params), delta)
    if name == "amud":
        return P.AmudExp3(cfg.N, cfg.M)
    if name == "ducb":
        return P.DelayedUCB(cfg.N, cfg.M)
    if name == "se":
        return P.SuccessiveElimination(cfg.N, cfg.M)
    if name == "oracle":
        return P.OraclePolicy(cfg.N, P.oracle_select(rep.expected), cfg.M)
    if name == "random":
        return P.RandomPolicy(cfg.N, cfg.M)
    raise ValueError(f"unknown policy {name!r}")


@dataclass
class EpisodeResult:
    label: str
    replication: int
    trace: RunTrace
    regret: RegretReport
    eta: float
    bound: float | None
    digest: str | None = None


@dataclass
class SummaryRow:
    policy: str
    env_id: str
    T: int
    d_max: int
    tran_num: int
    R: int
    mean_final_loss: float
    std_final_loss: float
    mean_final_regret: float
    mean_final_regret_expected: float
    theorem_bound: float | None
    bound_margin: float | None
    config_hash: str
    wall_clock_s: float = 0.0

    def csv_values(self):
        return [getattr(self, c) for c in SUMMARY_COLUMNS]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    episodes: dict = field(default_factory=dict)  # (label, replication) -> EpisodeResult
    summary: list = field(default_factory=list)
    trace_path: Path | None = None
    summary_path: Path | None = None

    def labels(self):
        return [p.label for p in self.config.policies]

    def by_policy(self, label: str) -> list[EpisodeResult]:
        return [self.episodes[(label, r)] for r in range(1, self.config.replications + 1)]

    def final_losses(self, label: str) -> np.ndarray:
        return np.array([e.trace.cum_loss[-1] for e in self.by_policy(label)])

    def row(self, label: str) -> SummaryRow:
        return next(r for r in self.summary if r.policy == label)


def label_id(label: str) -> int:
    """Stable 32-bit id of a policy label, so a policy's stream ignores its position in the config."""
    return int.from_bytes(hashlib.sha256(label.encode()).digest()[:4], "little")


def _digest(rep: Replication) -> str:
    h = hashlib.sha256()
    h.update(rep.table.tobytes())
    h.update(np.ascontiguousarray(rep.schedule.delays).tobytes())
    return h.hexdigest()


def _episode(pspec: PolicySpec, cfg: ExperimentConfig, rep: Replication, digest: bool):
    policy = make_policy(pspec, cfg, rep)
    seed = stream(cfg.master_seed, "policy", rep.index, P.POLICY_KINDS[pspec.name], label_id(pspec.label))
    trace = run_episode(policy, rep.spec, rep.schedule, cfg.T, rep.key, policy_seed=seed, table=rep.table)
    regret = compute_regret(trace, rep.spec, rep.key, arm_round_totals=rep.totals, expected=rep.expected)
    bound = None
    eta = float(policy.eta)
    if isinstance(policy, P.MudExp3):
        bound = B.theorem1_bound(B.BoundInputs.from_trace(trace, cfg.N, cfg.M, policy.eta_trunc))
    elif isinstance(policy, P.AmudExp3):
        bound = B.theorem2_bound(cfg.N, cfg.M, cfg.T, trace.full_delay_sum)
    return EpisodeResult(pspec.label, rep.index, trace, regret, eta, bound, _digest(rep) if digest else None)


def _summarize(cfg: ExperimentConfig, result: ExperimentResult, clock: dict) -> list[SummaryRow]:
    rows = []
    chash = cfg.config_hash()
    for label in result.labels():
        eps = result.by_policy(label)
        finals = np.array([e.trace.cum_loss[-1] for e in eps])
        regrets = np.array([e.regret.regret_hindsight for e in eps])
        exp_regrets = np.array([e.regret.regret_expected for e in eps])
        std = float(finals.std(ddof=1)) if len(finals) > 1 else 0.0
        bounds = [e.bound for e in eps if e.bound is not None]
        bound = float(np.mean(bounds)) if bounds else None
        mean_regret = float(regrets.mean())
        rows.append(SummaryRow(label, cfg.environment_id, cfg.T, cfg.d_max, cfg.tran_num, cfg.replications,
                               float(finals.mean()), std, mean_regret, float(exp_regrets.mean()), bound,
                               None if bound is None else bound - mean_regret, chash, clock.get(label, 0.0)))
    return rows


def run_experiment(cfg: ExperimentConfig, *, out_dir=None, write: bool = True, cache: TableCache | None = None,
                   digest: bool = False, keep_traces: bool = True) -> ExperimentResult:
    """Run every (policy, replication) episode of ``cfg``; optionally write CSVs.

    All policies of replication ``r`` share the environment, delay table and
    loss realisation drawn from the ``r``-th environment streams.
    """
    out_dir = Path(out_dir if out_dir is not None else cfg.output_dir)
    if write:
        _prepare_dir(out_dir)
    result = ExperimentResult(cfg)
    clock: dict[str, float] = {}
    tasks = list(cfg.policies)
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for r in range(1, cfg.replications + 1):
            rep = build_replication(cfg, r, cache)

            def job(pspec, rep=rep):
                t0 = time.perf_counter()
                res = _episode(pspec, cfg, rep, digest)
                return res, time.perf_counter() - t0

            outputs = list(pool.map(job, tasks)) if pool else [job(item) for item in tasks]
            for res, dt in outputs:
                result.episodes[(res.label, r)] = res
                clock[res.label] = clock.get(res.label, 0.0) + dt
    finally:
        if pool:
            pool.shutdown()
    result.summary = _summarize(cfg, result, clock)
    if write:
        result.trace_path, result.summary_path = write_outputs(result, out_dir)
    if not keep_traces:
        for ep in result.episodes.values():
            ep.trace.p_history = ep.trace.estimate_history = None
    return result


def _prepare_dir(out_dir: Path):
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out_dir}: {exc}") from exc
    if not os.access(out_dir, os.W_OK):
        raise OutputError(f"output directory {out_dir} is not writable")


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def trace_rows(result: ExperimentResult):
    """Long-format trace lines, ordered by policy (config order), replication, round."""
    cfg = result.config
    T = cfg.T
    rounds = np.arange(cfg.trace_stride, T + 1, cfg.trace_stride)
    if rounds.size == 0 or rounds[-1] != T:
        rounds = np.append(rounds, T)
    idx = rounds - 1
    for label in result.labels():
        for r in range(1, cfg.replications + 1):
            ep = result.episodes[(label, r)]
            tr = ep.trace
            cols = (
                rounds.tolist(), tr.arms[idx].tolist(), tr.delivered[idx].tolist(), tr.v_t[idx].tolist(),
                tr.epoch[idx].tolist(), tr.eta[idx].tolist(), tr.round_loss[idx].tolist(),
                tr.cum_loss[idx].tolist(), ep.regret.cum_regret_hindsight[idx].tolist(),
                ep.regret.cum_regret_expected[idx].tolist(),
            )
            prefix = f"{label},{r},"
            for t, a, dc, v, e, eta, rl, cl, rh, re in zip(*cols):
                yield f"{prefix}{t},{a},{dc},{v},{e},{eta!r},{rl!r},{cl!r},{rh!r},{re!r}\n"


def write_outputs(result: ExperimentResult, out_dir: Path):
    trace_path = out_dir / "traces.csv"
    summary_path = out_dir / "summary.csv"
    tmp = [out_dir / ".traces.csv.part", out_dir / ".summary.csv.part"]
    try:
        with open(tmp[0], "w", newline="") as fh:
            fh.write(",".join(TRACE_COLUMNS) + "\n")
            fh.writelines(trace_rows(result))
        write_summary(result.summary, tmp[1])
        os.replace(tmp[0], trace_path)
        os.replace(tmp[1], summary_path)
    except BaseException:
        for p in tmp:
            p.unlink(missing_ok=True)
        raise
    return trace_path, summary_path


def write_summary(rows, path):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(SUMMARY_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row.csv_values()) + "\n")
