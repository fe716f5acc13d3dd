"""Closed-form regret bounds and per-run inequality checkers.

Bound formulas are evaluated with mpmath at 50 digits so checked-in golden
values do not drift across platforms.  The checkers take recorded traces and
report every violation rather than raising.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath as mp
import numpy as np

from .environment import DelaySchedule
from .simulator import RunTrace, delivery_schedule

_DPS = 50


@dataclass(frozen=True)
class BoundInputs:
    N: int
    M: int
    T: int
    eta: float  # truncated learning rate actually used
    sum_delivered_delays: float
    omega_count: int
    full_delay_sum: float

    def __post_init__(self):
        if min(self.N, self.M, self.T) < 1 or self.eta <= 0:
            raise ValueError("N, M, T and eta must be positive")
        if self.sum_delivered_delays > self.full_delay_sum:
            raise ValueError("delivered-delay sum exceeds the full delay sum")
        if not 0 <= self.omega_count <= self.M * self.T:
            raise ValueError("omega count outside [0, M*T]")

    @classmethod
    def from_trace(cls, trace: RunTrace, N: int, M: int, eta: float) -> "BoundInputs":
        return cls(N, M, trace.horizon, eta, trace.delivered_delay_sum, trace.omega_count, trace.full_delay_sum)


def theorem1_bound(inputs: BoundInputs) -> float:
    """ln N / eta + eta M^2 T N e / 2 + 2 eta M sum_delivered_d + |Omega|."""
    with mp.workdps(_DPS):
        eta = mp.mpf(inputs.eta)
        N, M, T = (mp.mpf(x) for x in (inputs.N, inputs.M, inputs.T))
        val = (mp.log(N) / eta + eta * M ** 2 * T * N * mp.e / 2
               + 2 * eta * M * mp.mpf(inputs.sum_delivered_delays) + inputs.omega_count)
        return float(val)


def theorem2_bound(N: int, M: int, T: int, full_delay_sum: float) -> float:
    with mp.workdps(_DPS):
        N, M, T = mp.mpf(N), mp.mpf(M), mp.mpf(T)
        ln_n = mp.log(N)
        val = ((11 * mp.sqrt(M * ln_n) + 7 * mp.sqrt(M)) * mp.sqrt(mp.mpf(full_delay_sum))
               + mp.mpf(5) / 2 * M * N * mp.e * mp.sqrt(T * ln_n))
        return float(val)


def theorem1_condition_holds(eta: float, N: int, M: int, delivered_delay_sum: float) -> bool:
    """Whether eta <= 1 / (M N e (sum_d + 1)), the premise of the tuned bound."""
    return eta <= 1.0 / (M * N * math.e * (delivered_delay_sum + 1))


@dataclass
class MarginReport:
    mean_regret: float
    bound: float
    margin: float
    passed: bool


def empirical_vs_bound(mean_regret: float, bound_value: float) -> MarginReport:
    return MarginReport(mean_regret, bound_value, bound_value - mean_regret, mean_regret <= bound_value)


# -- epoch bookkeeping ---------------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    first: int  # first round (1-based); 0 for an epoch skipped by a threshold jump
    last: int
    missing_sum: int  # sum of V_t over the epoch's rounds
    delivered_delay_sum: int  # sum of d over events originating and delivered inside the epoch
    delivered_delay_sum_by_arrival: int  # sum of d over events arriving inside the epoch
    omega: int  # events originating in the epoch and still undelivered at its last round

    @property
    def empty(self) -> bool:
        return self.first == 0

    @property
    def length(self) -> int:
        return 0 if self.empty else self.last - self.first + 1


@dataclass
class EpochLog:
    records: list[EpochRecord]
    final_epoch: int
    horizon: int
    num_users: int

    def nonempty(self):
        return [r for r in self.records if not r.empty]


def build_epoch_log(epoch_by_round, v_t, delays) -> EpochLog:
    """Group rounds by epoch index and tally the per-epoch quantities."""
    epoch_by_round = np.asarray(epoch_by_round, dtype=np.int64)
    v_t = np.asarray(v_t, dtype=np.int64)
    delays = np.asarray(delays.delays if isinstance(delays, DelaySchedule) else delays, dtype=np.int64)
    T, M = delays.shape
    if epoch_by_round.shape != (T,) or v_t.shape != (T,):
        raise ValueError("epoch/V_t arrays must have one entry per round")
    if np.any(np.diff(epoch_by_round) < 0):
        raise ValueError("epoch index decreased")
    start, origin, user = delivery_schedule(delays)
    arrival_delay = np.zeros(T + 1, dtype=np.int64)
    for t in range(1, T + 1):
        sl = slice(start[t], start[t + 1])
        arrival_delay[t] = delays[origin[sl] - 1, user[sl]].sum()
    rounds = np.arange(1, T + 1)
    arrival = rounds[:, None] + delays  # (T, M)
    records = []
    final = int(epoch_by_round[-1])
    for e in range(1, final + 1):
        idx = np.nonzero(epoch_by_round == e)[0]
        if idx.size == 0:
            records.append(EpochRecord(e, 0, 0, 0, 0, 0, 0))
            continue
        first, last = int(idx[0] + 1), int(idx[-1] + 1)
        own = arrival[first - 1:last]
        own_d = delays[first - 1:last]
        inside = own <= last
        records.append(EpochRecord(
            epoch=e, first=first, last=last,
            missing_sum=int(v_t[first - 1:last].sum()),
            delivered_delay_sum=int(own_d[inside].sum()),
            delivered_delay_sum_by_arrival=int(arrival_delay[first:last + 1].sum()),
            omega=int((~inside).sum()),
        ))
    return EpochLog(records, final, T, M)


def epoch_log_from_trace(trace: RunTrace, delays) -> EpochLog:
    return build_epoch_log(trace.epoch, trace.v_t, delays)


@dataclass
class CheckResult:
    name: str
    passed: bool
    violations: list = field(default_factory=list)

    def __bool__(self):
        return self.passed


def lemma5_rhs(epoch: int, M: int) -> float:
    return (2.0 ** (epoch - 1) + 1.0 / epoch) * M


def check_lemma5(log: EpochLog, M: int, by_arrival: bool = False) -> CheckResult:
    """delivered delays <= sum V_t <= (2^(e-1) + 1/e) M on every nonempty epoch.

    ``by_arrival`` switches the left-hand side from events that originate and
    arrive inside the epoch to all events arriving inside it.
    """
    bad = []
    for r in log.nonempty():
        left = r.delivered_delay_sum_by_arrival if by_arrival else r.delivered_delay_sum
        rhs = lemma5_rhs(r.epoch, M)
        if not left <= r.missing_sum:
            bad.append((r.epoch, "left", left, r.missing_sum))
        if not r.missing_sum <= rhs:
            bad.append((r.epoch, "right", r.missing_sum, rhs))
    return CheckResult("lemma5", not bad, bad)


def lemma6_bound(epoch: int, M: int) -> float:
    return 2.0 ** (epoch / 2.0) * 2 * M


def check_lemma6(log: EpochLog, M: int) -> CheckResult:
    bad = [(r.epoch, r.omega, lemma6_bound(r.epoch, M))
           for r in log.nonempty() if not r.omega <= lemma6_bound(r.epoch, M)]
    return CheckResult("lemma6", not bad, bad)


def check_lemma7(log: EpochLog, full_delay_sum: float, M: int, T: int) -> CheckResult:
    bad = []
    E = log.final_epoch
    lhs1 = 2.0 ** (E - 1)
    rhs1 = full_delay_sum / M
    if not lhs1 <= rhs1:
        bad.append(("epoch_count", lhs1, rhs1))
    lhs2 = math.fsum(r.length * 2.0 ** (-r.epoch / 2.0) for r in log.records)
    rhs2 = 5.0 * math.sqrt(T)
    if not lhs2 <= rhs2:
        bad.append(("length_sum", lhs2, rhs2))
    return CheckResult("lemma7", not bad, bad)


# -- per-round probability inequalities on MUD trajectories ----------------------------------

def _p_and_ell(trace: RunTrace):
    if trace.p_history is None or trace.estimate_history is None:
        raise ValueError("trace was not recorded with record=True")
    p = trace.p_history
    return p[:-1], p[1:], trace.estimate_history


def check_lemma1(trace: RunTrace, eta: float, rtol: float = 1e-12) -> CheckResult:
    """-eta p_i(t) ell_i(t) <= p_i(t+1) - p_i(t) <= eta p_i(t+1) sum_k p_k(t) ell_k(t).

    ``rtol`` absorbs float rounding relative to the size of the terms involved.
    """
    p0, p1, ell = _p_and_ell(trace)
    diff = p1 - p0
    lower = -eta * p0 * ell
    mix = (p0 * ell).sum(axis=1, keepdims=True)
    upper = eta * p1 * mix
    slack = rtol * (np.abs(p0) + np.abs(p1) + np.abs(lower) + np.abs(upper))
    bad_lo = np.argwhere(diff < lower - slack)
    bad_hi = np.argwhere(diff > upper + slack)
    bad = [("lower", int(t) + 1, int(i)) for t, i in bad_lo] + [("upper", int(t) + 1, int(i)) for t, i in bad_hi]
    return CheckResult("lemma1", not bad, bad)


def check_lemma2(trace: RunTrace, delta: float, rtol: float = 1e-12) -> CheckResult:
    """p_i(t+1) <= (1 + 1/delta) p_i(t)."""
    p0, p1, _ = _p_and_ell(trace)
    bound = (1.0 + 1.0 / delta) * p0
    bad = [(int(t) + 1, int(i)) for t, i in np.argwhere(p1 > bound * (1 + rtol))]
    return CheckResult("lemma2", not bad, bad)


def check_corollary1(trace: RunTrace, eta: float, rtol: float = 1e-12) -> CheckResult:
    """sum_i |p_i(t+1) - p_i(t)| <= 2 eta sum_k p_k(t) ell_k(t)."""
    p0, p1, ell = _p_and_ell(trace)
    drift = np.abs(p1 - p0).sum(axis=1)
    bound = 2.0 * eta * (p0 * ell).sum(axis=1)
    bad = [int(t) + 1 for t in np.nonzero(drift > bound + rtol * (1.0 + bound))[0]]
    return CheckResult("corollary1", not bad, bad)
