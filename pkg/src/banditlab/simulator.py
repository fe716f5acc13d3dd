"""Round loop, feedback queue, regret and replication aggregation.

Per round ``t`` (1-based): the policy draws ``A_t``, all ``M`` users' losses for
``A_t`` are realised and queued for round ``t + d_t^j``, then the batch ``Phi_t``
due this round is handed to ``policy.observe``.  Events due after ``T`` are
counted into ``omega`` and never delivered.

Two engines run the same loop: a plain Python one that drives any
:class:`~banditlab.policies.Policy`, and a numba kernel for the six built-in
policies.  Both consume the same loss values, delay table and uniform stream,
so they produce identical traces.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import policies as P
from .policies import (accumulate_estimates, add_raw_losses, amud_advance, categorical, ducb_choose,
                       se_eliminate, se_next, softmax_neg)
from .environment import DelaySchedule, LossRealization, SegmentedLossSpec, expected_loss_matrix


class FeedbackQueue:
    """Bucket map from delivery round to the events due then."""

    def __init__(self, horizon: int):
        self.horizon = horizon
        self.buckets: dict[int, list] = defaultdict(list)
        self.created = 0
        self.delivered = 0
        self.dropped = 0  # |Omega|: due after the horizon

    def push(self, event: P.DeliveredEvent, delivery_round: int):
        self.created += 1
        if delivery_round > self.horizon:
            self.dropped += 1
        else:
            self.buckets[delivery_round].append(event._replace(delivery_round=delivery_round))

    def pop(self, t: int) -> list:
        batch = self.buckets.pop(t, [])
        self.delivered += len(batch)
        return batch

    @property
    def in_flight(self) -> int:
        return self.created - self.delivered - self.dropped


@njit(cache=True, nogil=True)
def delivery_schedule(delays):
    """CSR view of ``Phi_t`` for a full delay table.

    Returns ``(start, origin, user)``: the events delivered at round ``t`` are
    ``origin[start[t]:start[t+1]]`` / ``user[...]``, in creation order.
    """
    T, M = delays.shape
    counts = np.zeros(T + 2, dtype=np.int64)
    for s in range(1, T + 1):
        for j in range(M):
            r = s + delays[s - 1, j]
            if r <= T:
                counts[r] += 1
    start = np.zeros(T + 2, dtype=np.int64)
    for t in range(1, T + 1):
        start[t + 1] = start[t] + counts[t]
    fill = start.copy()
    n = start[T + 1]
    origin = np.empty(n, dtype=np.int64)
    user = np.empty(n, dtype=np.int64)
    for s in range(1, T + 1):
        for j in range(M):
            r = s + delays[s - 1, j]
            if r <= T:
                origin[fill[r]] = s
                user[fill[r]] = j
                fill[r] += 1
    return start, origin, user


@dataclass
class RunTrace:
    policy: str
    arms: np.ndarray
    origin_probs: np.ndarray
    delivered: np.ndarray
    v_t: np.ndarray
    epoch: np.ndarray
    eta: np.ndarray
    round_loss: np.ndarray
    omega_count: int
    delivered_delay_sum: int
    full_delay_sum: int
    p_history: np.ndarray | None = None  # (T+1, N): row t-1 is p(t)
    estimate_history: np.ndarray | None = None  # (T, N): row t-1 is ell(t)
    extras: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return len(self.arms)

    @property
    def cum_loss(self) -> np.ndarray:
        return np.cumsum(self.round_loss)

    def equals(self, other: "RunTrace") -> bool:
        names = ("arms", "origin_probs", "delivered", "v_t", "epoch", "eta", "round_loss")
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in names) and (
            self.omega_count, self.delivered_delay_sum) == (other.omega_count, other.delivered_delay_sum)


def _check_dims(policy, spec: SegmentedLossSpec, schedule: DelaySchedule, T: int):
    if T != spec.horizon or T != schedule.horizon:
        raise ValueError(f"horizon mismatch: T={T}, env={spec.horizon}, delays={schedule.horizon}")
    if schedule.num_users != spec.num_users:
        raise ValueError(f"user count mismatch: env M={spec.num_users}, delays M={schedule.num_users}")
    if policy.n_arms != spec.num_arms:
        raise ValueError(f"policy has {policy.n_arms} arms, env has {spec.num_arms}")


def policy_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def run_episode(policy: P.Policy, env_spec: SegmentedLossSpec, delay_schedule: DelaySchedule,
                T: int, seed, *, policy_seed=None, table=None, record: bool = False,
                engine: str = "auto") -> RunTrace:
    """Play one episode.

    ``seed`` keys the loss realisation; ``policy_seed`` (default: derived from
    ``seed``) drives the policy's own randomness.  ``table`` optionally supplies
    the materialised (T, N, M) loss table for that same seed.
    """
    _check_dims(policy, env_spec, delay_schedule, T)
    if policy_seed is None:
        policy_seed = np.random.SeedSequence(entropy=_entropy(seed), spawn_key=(3,))
    if engine == "auto":
        engine = "compiled" if policy.kind >= 0 and type(policy) in _BUILTIN else "python"
    if engine == "compiled":
        if table is None:
            table = LossRealization(env_spec, seed).table()
        return _run_compiled(policy, table, delay_schedule, policy_seed, record)
    if engine != "python":
        raise ValueError(f"unknown engine {engine!r}")
    return _run_python(policy, env_spec, delay_schedule, T, seed, policy_seed, table, record)


def _entropy(seed) -> int:
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.generate_state(1, np.uint64)[0])
    return int(seed)


def _run_python(policy, spec, schedule, T, seed, policy_seed, table, record):
    M = spec.num_users
    N = spec.num_arms
    rng = policy_rng(policy_seed)
    losses = LossRealization(spec, seed)
    queue = FeedbackQueue(T)
    policy.reset()
    out = {k: np.zeros(T, dtype=np.int64) for k in ("arms", "delivered", "v_t", "epoch")}
    probs = np.zeros(T)
    eta = np.zeros(T)
    round_loss = np.zeros(T)
    p_hist = np.zeros((T + 1, N)) if record else None
    ell_hist = np.zeros((T, N)) if record else None
    deliveries = [] if record else None
    received = 0
    delay_sum = 0
    d = schedule.delays
    for t in range(1, T + 1):
        batch = queue.pop(t)
        if record and hasattr(policy, "p"):
            p_hist[t - 1] = policy.p
        a = policy.select(t, rng)
        pa = policy.probability(a)
        row = table[t - 1, a] if table is not None else losses.round_losses(t, a)
        for j in range(M):
            queue.push(P.DeliveredEvent(t, j, a, float(row[j]), pa), t + int(d[t - 1, j]))
        policy.observe(t, batch)
        received += len(batch)
        delay_sum += sum(int(d[e.origin_round - 1, e.user]) for e in batch)
        out["arms"][t - 1] = a
        out["delivered"][t - 1] = len(batch)
        out["v_t"][t - 1] = M * t - received
        out["epoch"][t - 1] = policy.epoch
        probs[t - 1] = pa
        eta[t - 1] = policy.eta
        rl = 0.0
        for x in row:
            rl += float(x)
        round_loss[t - 1] = rl
        if record:
            if hasattr(policy, "last_estimates"):
                ell_hist[t - 1] = policy.last_estimates
            deliveries.append([(e.origin_round, e.user) for e in batch])
    if record and hasattr(policy, "p"):
        p_hist[T] = policy.p
    trace = RunTrace(policy.name, out["arms"], probs, out["delivered"], out["v_t"], out["epoch"], eta,
                     round_loss, queue.dropped, delay_sum, schedule.full_sum(), p_hist, ell_hist)
    if record:
        trace.extras["deliveries"] = deliveries
        trace.extras["queue"] = (queue.created, queue.delivered, queue.dropped)
    return trace


@njit(cache=True, nogil=True)
def _episode_kernel(kind, table, delays, u, eta_fixed, oracle_arm, record):
    T, N, M = table.shape
    start, origin, user = delivery_schedule(delays)
    max_batch = 0
    for t in range(1, T + 1):
        if start[t + 1] - start[t] > max_batch:
            max_batch = start[t + 1] - start[t]
    b_arms = np.empty(max_batch, dtype=np.int64)
    b_loss = np.empty(max_batch)
    b_prob = np.empty(max_batch)

    arm_hist = np.zeros(T, dtype=np.int64)
    prob_hist = np.zeros(T)
    loss_hist = np.zeros((T, M))
    delivered = np.zeros(T, dtype=np.int64)
    v_out = np.zeros(T, dtype=np.int64)
    epoch_out = np.zeros(T, dtype=np.int64)
    eta_out = np.zeros(T)
    round_loss = np.zeros(T)
    p_hist = np.zeros((T + 1 if record else 0, N))
    ell_hist = np.zeros((T if record else 0, N))

    L = np.zeros(N)
    p = np.full(N, 1.0 / N)
    ell = np.zeros(N)
    counts = np.zeros(N, dtype=np.int64)
    sums = np.zeros(N)
    active = np.ones(N, dtype=np.bool_)
    pointer = 0
    epoch = 0
    eta = eta_fixed if kind == 0 else 1.0
    if kind > 1:
        eta = 0.0
    cum_missing = 0
    received = 0
    delay_sum = 0
    log_n = np.log(N)

    for t in range(1, T + 1):
        if record:
            p_hist[t - 1, :] = p
        if kind == 0 or kind == 1:
            a = categorical(p, u[t - 1])
            pa = p[a]
        elif kind == 2:
            a = ducb_choose(counts, sums, t)
            pa = 1.0
        elif kind == 3:
            a = se_next(active, pointer)
            pointer = (a + 1) % N
            pa = 1.0
        elif kind == 4:
            a = oracle_arm
            pa = 1.0
        else:
            a = min(int(u[t - 1] * N), N - 1)
            pa = 1.0 / N
        arm_hist[t - 1] = a
        prob_hist[t - 1] = pa
        rl = 0.0
        for j in range(M):
            x = table[t - 1, a, j]
            loss_hist[t - 1, j] = x
            rl += x

        k0 = start[t]
        nd = start[t + 1] - k0
        for k in range(nd):
            s = origin[k0 + k]
            j = user[k0 + k]
            b_arms[k] = arm_hist[s - 1]
            b_loss[k] = loss_hist[s - 1, j]
            b_prob[k] = prob_hist[s - 1]
            delay_sum += delays[s - 1, j]
        received += nd
        v = M * t - received

        if kind == 0:
            accumulate_estimates(L, ell, b_arms[:nd], b_loss[:nd], b_prob[:nd])
            softmax_neg(L, eta, p)
        elif kind == 1:
            cum_missing += v
            new_epoch = amud_advance(cum_missing, epoch, M)
            if new_epoch != epoch:
                epoch = new_epoch
                L[:] = 0.0
            eta = np.sqrt(log_n / 2.0 ** epoch) / M
            accumulate_estimates(L, ell, b_arms[:nd], b_loss[:nd], b_prob[:nd])
            softmax_neg(L, eta, p)
        elif kind == 2:
            add_raw_losses(counts, sums, b_arms[:nd], b_loss[:nd])
        elif kind == 3:
            add_raw_losses(counts, sums, b_arms[:nd], b_loss[:nd])
            se_eliminate(active, counts, sums, t)

        delivered[t - 1] = nd
        v_out[t - 1] = v
        epoch_out[t - 1] = epoch
        eta_out[t - 1] = eta
        round_loss[t - 1] = rl
        if record:
            ell_hist[t - 1, :] = ell
    if record:
        p_hist[T, :] = p
    omega = M * T - received
    return (arm_hist, prob_hist, delivered, v_out, epoch_out, eta_out, round_loss,
            omega, delay_sum, p_hist, ell_hist)


_BUILTIN = (P.MudExp3, P.AmudExp3, P.DelayedUCB, P.SuccessiveElimination, P.OraclePolicy, P.RandomPolicy)


def _run_compiled(policy, table, schedule, policy_seed, record):
    table = np.ascontiguousarray(table, dtype=float)
    T = table.shape[0]
    rng = policy_rng(policy_seed)
    u = rng.random(T) if policy.randomized else np.zeros(T)
    eta = policy.eta_trunc if isinstance(policy, P.MudExp3) else 0.0
    oracle_arm = policy.arm if isinstance(policy, P.OraclePolicy) else 0
    (arms, probs, delivered, v, epoch, eta_out, round_loss, omega, delay_sum,
     p_hist, ell_hist) = _episode_kernel(policy.kind, table, np.ascontiguousarray(schedule.delays, dtype=np.int64),
                                         u, eta, oracle_arm, record)
    return RunTrace(policy.name, arms, probs, delivered, v, epoch, eta_out, round_loss, int(omega),
                    int(delay_sum), schedule.full_sum(),
                    p_hist if record else None, ell_hist if record else None)


# -- regret and aggregation -----------------------------------------------------------

@dataclass
class RegretReport:
    regret_hindsight: float
    regret_expected: float
    best_arm: int
    oracle_arm: int
    omega_count: int
    delivered_delay_sum: int
    full_delay_sum: int
    cum_regret_hindsight: np.ndarray
    cum_regret_expected: np.ndarray
    arm_totals: np.ndarray  # realised total loss per arm


def compute_regret(trace: RunTrace, env_spec: SegmentedLossSpec, seed, *, arm_round_totals=None,
                   expected=None) -> RegretReport:
    """Hindsight regret against the best fixed arm and regret against the oracle arm.

    Running columns compare the player's cumulative loss through ``t`` with the
    best fixed arm through ``t`` (hindsight) and with ``M`` times the oracle
    arm's cumulative expected loss (expected).
    """
    if arm_round_totals is None:
        arm_round_totals = LossRealization(env_spec, seed).arm_round_totals()
    if expected is None:
        expected = expected_loss_matrix(env_spec)
    cum_player = np.cumsum(trace.round_loss)
    cum_arms = np.cumsum(arm_round_totals, axis=0)
    best_so_far = cum_arms.min(axis=1)
    totals = cum_arms[-1].copy()  # a view would pin the whole (T, N) cumsum
    best_arm = int(np.argmin(totals))
    oracle_arm = P.oracle_select(expected)
    cum_oracle = env_spec.num_users * np.cumsum(expected[:, oracle_arm])
    hind = cum_player - best_so_far
    exp_reg = cum_player - cum_oracle
    return RegretReport(float(hind[-1]), float(exp_reg[-1]), best_arm, oracle_arm, trace.omega_count,
                        trace.delivered_delay_sum, trace.full_delay_sum, hind, exp_reg, totals)


@dataclass
class Aggregate:
    mean: np.ndarray
    std: np.ndarray

    @property
    def lower(self):
        return self.mean - 2.0 * self.std

    @property
    def upper(self):
        return self.mean + 2.0 * self.std


def aggregate_replications(traces, metric: str = "cum_loss") -> Aggregate:
    """Per-round sample mean and (n-1) standard deviation across replications."""
    rows = [np.asarray(getattr(tr, metric) if isinstance(tr, RunTrace) else tr, dtype=float) for tr in traces]
    if len(rows) < 2:
        raise ValueError("need at least 2 replications to aggregate")
    if len({r.shape for r in rows}) != 1:
        raise ValueError("replications differ in length")
    # sort rows so the float summation order does not depend on input order
    stack = np.stack(sorted(rows, key=lambda r: r.tobytes()))
    return Aggregate(stack.mean(axis=0), stack.std(axis=0, ddof=1))
