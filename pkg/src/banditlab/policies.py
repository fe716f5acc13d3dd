"""Arm-selection policies behind one select / observe / reset interface.

Arms are 0-based.  ``select(t, rng)`` must be called before ``observe(t, events)``
in every round; a policy only ever sees events handed to ``observe``.

The numeric kernels are numba functions so that the pure-Python policy objects
and the compiled episode loop in :mod:`banditlab.simulator` run the same code.
"""
from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit

PROB_FLOOR = 1e-300


class DeliveredEvent(NamedTuple):
    origin_round: int
    user: int
    arm: int
    loss: float
    origin_prob: float
    delivery_round: int = 0


# -- shared numeric kernels -------------------------------------------------

@njit(cache=True, nogil=True)
def softmax_neg(L, eta, out):
    """out_i = exp(-eta * L_i) / sum_k exp(-eta * L_k), shifted by min(L)."""
    n = L.shape[0]
    lo = L[0]
    for i in range(1, n):
        if L[i] < lo:
            lo = L[i]
    total = 0.0
    for i in range(n):
        w = math.exp(-eta * (L[i] - lo))
        if w < PROB_FLOOR:
            w = PROB_FLOOR
        out[i] = w
        total += w
    for i in range(n):
        out[i] = out[i] / total


@njit(cache=True, nogil=True)
def categorical(p, u):
    """Inverse-CDF draw from ``p`` with a uniform ``u`` in [0, 1)."""
    acc = 0.0
    n = p.shape[0]
    for i in range(n):
        acc += p[i]
        if u < acc:
            return i
    # u landed in the rounding gap above the last partial sum
    for i in range(n - 1, -1, -1):
        if p[i] > 0.0:
            return i
    return n - 1


@njit(cache=True, nogil=True)
def accumulate_estimates(L, ell, arms, losses, probs):
    """Add importance-weighted estimates of a delivery batch into ``L``.

    ``ell`` receives the per-arm batch total (the round's estimated loss).
    """
    for i in range(ell.shape[0]):
        ell[i] = 0.0
    for k in range(arms.shape[0]):
        ell[arms[k]] += losses[k] / probs[k]
    for i in range(ell.shape[0]):
        L[i] += ell[i]


@njit(cache=True, nogil=True)
def amud_advance(cum_missing, epoch, n_users):
    """Epoch index after the missing count reaches ``cum_missing``."""
    while cum_missing >= (2 ** epoch) * n_users:
        epoch += 1
    return epoch


@njit(cache=True, nogil=True)
def ducb_choose(counts, sums, t):
    n = counts.shape[0]
    for i in range(n):
        if counts[i] == 0:
            return i
    bonus_num = 2.0 * math.log(t)
    best = 0
    best_val = np.inf
    for i in range(n):
        v = sums[i] / counts[i] - math.sqrt(bonus_num / counts[i])
        if v < best_val:
            best_val = v
            best = i
    return best


@njit(cache=True, nogil=True)
def add_raw_losses(counts, sums, arms, losses):
    for k in range(arms.shape[0]):
        counts[arms[k]] += 1
        sums[arms[k]] += losses[k]


@njit(cache=True, nogil=True)
def se_eliminate(active, counts, sums, t):
    """Drop active arms whose lower bound exceeds the smallest upper bound."""
    n = active.shape[0]
    for i in range(n):
        if active[i] and counts[i] == 0:
            return 0
    if t <= 1:
        return 0
    c = 2.0 * math.log(t)
    best_ucb = np.inf
    for i in range(n):
        if active[i]:
            ucb = sums[i] / counts[i] + math.sqrt(c / counts[i])
            if ucb < best_ucb:
                best_ucb = ucb
    removed = 0
    for i in range(n):
        if active[i]:
            lcb = sums[i] / counts[i] - math.sqrt(c / counts[i])
            if lcb > best_ucb:
                active[i] = False
                removed += 1
    return removed


@njit(cache=True, nogil=True)
def se_next(active, pointer):
    n = active.shape[0]
    for k in range(n):
        i = (pointer + k) % n
        if active[i]:
            return i
    return -1


# -- scalar helpers -----------------------------------------------------------

def truncate_learning_rate(eta: float, M: int, N: int, delta: float) -> float:
    return min(eta, 1.0 / (M * N * math.e * (delta + 1)))


def recommended_eta(N: int, M: int, T: int, sum_delays: float) -> float:
    return math.sqrt(math.log(N) / (M * (T * M * N * math.e + 4.0 * sum_delays)))


def amud_learning_rate(epoch: int, N: int, M: int) -> float:
    return math.sqrt(math.log(N) / 2.0 ** epoch) / M


def importance_weighted_estimate(event: DeliveredEvent, arm: int) -> float:
    if event.origin_prob <= 0:
        raise ValueError("origin probability must be positive")
    return event.loss / event.origin_prob if event.arm == arm else 0.0


def _event_arrays(events: Sequence[DeliveredEvent]):
    arms = np.fromiter((e.arm for e in events), dtype=np.int64, count=len(events))
    losses = np.fromiter((e.loss for e in events), dtype=float, count=len(events))
    probs = np.fromiter((e.origin_prob for e in events), dtype=float, count=len(events))
    return arms, losses, probs


def mud_observe(L: np.ndarray, events: Sequence[DeliveredEvent]) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(L + ell, ell)`` for a delivery batch."""
    L = np.array(L, dtype=float)
    ell = np.zeros_like(L)
    arms, losses, probs = _event_arrays(events)
    if np.any(probs <= 0):
        raise ValueError("origin probability must be positive")
    accumulate_estimates(L, ell, arms, losses, probs)
    return L, ell


def mud_update_distribution(L, eta: float) -> np.ndarray:
    L = np.asarray(L, dtype=float)
    p = np.empty_like(L)
    softmax_neg(L, eta, p)
    return p


def mud_select(p, rng: np.random.Generator) -> int:
    return int(categorical(np.asarray(p, dtype=float), rng.random()))


def random_select(N: int, rng: np.random.Generator) -> int:
    return min(int(rng.random() * N), N - 1)


def oracle_select(expected_losses) -> int:
    """Fixed arm with the smallest total expected loss (lowest index on ties).

    Accepts a (T, N) per-round matrix or a length-N vector of totals.
    """
    x = np.asarray(expected_losses, dtype=float)
    totals = x.sum(axis=0) if x.ndim == 2 else x
    return int(np.argmin(totals))


# -- policy objects -------------------------------------------------------------

class Policy:
    name = "base"
    kind = -1
    randomized = False

    def __init__(self, n_arms: int, n_users: int = 1):
        self.n_arms = n_arms
        self.n_users = n_users

    def reset(self):
        raise NotImplementedError

    def select(self, t: int, rng) -> int:
        raise NotImplementedError

    def probability(self, arm: int) -> float:
        """Probability the last ``select`` call assigned to ``arm``."""
        return 1.0

    def observe(self, t: int, events: Sequence[DeliveredEvent]):
        raise NotImplementedError

    # trace hooks; policies without the notion report zeros
    @property
    def epoch(self) -> int:
        return 0

    @property
    def eta(self) -> float:
        return 0.0


class MudExp3(Policy):
    """Exponential weights over importance-weighted, delay-aware loss sums."""

    name = "mud"
    kind = 0
    randomized = True

    def __init__(self, n_arms, n_users, eta, delta):
        super().__init__(n_arms, n_users)
        if eta <= 0 or delta < 1:
            raise ValueError("need eta > 0 and delta >= 1")
        self.eta_input = float(eta)
        self.delta = delta
        self.eta_trunc = truncate_learning_rate(eta, n_users, n_arms, delta)
        self.reset()

    def reset(self):
        self.L = np.zeros(self.n_arms)
        self.p = np.full(self.n_arms, 1.0 / self.n_arms)
        self.last_estimates = np.zeros(self.n_arms)

    @property
    def eta(self):
        return self.eta_trunc

    def select(self, t, rng):
        return int(categorical(self.p, rng.random()))

    def probability(self, arm):
        return float(self.p[arm])

    def observe(self, t, events):
        arms, losses, probs = _event_arrays(events)
        accumulate_estimates(self.L, self.last_estimates, arms, losses, probs)
        softmax_neg(self.L, self.eta_trunc, self.p)


class AmudExp3(Policy):
    """Exp-weights restarted on a doubling schedule of the missing-feedback count."""

    name = "amud"
    kind = 1
    randomized = True

    def __init__(self, n_arms, n_users):
        super().__init__(n_arms, n_users)
        self.reset()

    def reset(self):
        self.L = np.zeros(self.n_arms)
        self.p = np.full(self.n_arms, 1.0 / self.n_arms)
        self.last_estimates = np.zeros(self.n_arms)
        self._epoch = 0
        self._eta = 1.0
        self.cum_missing = 0
        self.received = 0
        self.last_missing = 0
        self.advance_log: list[tuple[int, int]] = []  # (round, new epoch)

    @property
    def epoch(self):
        return self._epoch

    @property
    def eta(self):
        return self._eta

    def select(self, t, rng):
        return int(categorical(self.p, rng.random()))

    def probability(self, arm):
        return float(self.p[arm])

    def observe(self, t, events):
        self.received += len(events)
        self.last_missing = self.n_users * t - self.received
        self.cum_missing += self.last_missing
        new_epoch = int(amud_advance(self.cum_missing, self._epoch, self.n_users))
        if new_epoch != self._epoch:
            for e in range(self._epoch + 1, new_epoch + 1):
                self.advance_log.append((t, e))
            self._epoch = new_epoch
            self.L[:] = 0.0
        self._eta = amud_learning_rate(self._epoch, self.n_arms, self.n_users)
        arms, losses, probs = _event_arrays(events)
        accumulate_estimates(self.L, self.last_estimates, arms, losses, probs)
        softmax_neg(self.L, self._eta, self.p)


class DelayedUCB(Policy):
    """Lower-confidence-bound rule on delivered per-user losses."""

    name = "ducb"
    kind = 2

    def __init__(self, n_arms, n_users=1):
        super().__init__(n_arms, n_users)
        self.reset()

    def reset(self):
        self.counts = np.zeros(self.n_arms, dtype=np.int64)
        self.sums = np.zeros(self.n_arms)

    def select(self, t, rng=None):
        return int(ducb_choose(self.counts, self.sums, t))

    def observe(self, t, events):
        arms, losses, _ = _event_arrays(events)
        add_raw_losses(self.counts, self.sums, arms, losses)

    def means(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.sums / self.counts


class SuccessiveElimination(Policy):
    """Round-robin over surviving arms, eliminating on confidence separation."""

    name = "se"
    kind = 3

    def __init__(self, n_arms, n_users=1):
        super().__init__(n_arms, n_users)
        self.reset()

    def reset(self):
        self.counts = np.zeros(self.n_arms, dtype=np.int64)
        self.sums = np.zeros(self.n_arms)
        self.active = np.ones(self.n_arms, dtype=np.bool_)
        self.pointer = 0

    def select(self, t, rng=None):
        arm = int(se_next(self.active, self.pointer))
        self.pointer = (arm + 1) % self.n_arms
        return arm

    def observe(self, t, events):
        arms, losses, _ = _event_arrays(events)
        add_raw_losses(self.counts, self.sums, arms, losses)
        se_eliminate(self.active, self.counts, self.sums, t)


class OraclePolicy(Policy):
    name = "oracle"
    kind = 4

    def __init__(self, n_arms, arm, n_users=1):
        super().__init__(n_arms, n_users)
        if not 0 <= arm < n_arms:
            raise ValueError(f"oracle arm {arm} out of range")
        self.arm = int(arm)

    def reset(self):
        pass

    def select(self, t, rng=None):
        return self.arm

    def observe(self, t, events):
        pass


class RandomPolicy(Policy):
    name = "random"
    kind = 5
    randomized = True

    def __init__(self, n_arms, n_users=1):
        super().__init__(n_arms, n_users)

    def reset(self):
        pass

    def select(self, t, rng):
        return random_select(self.n_arms, rng)

    def probability(self, arm):
        return 1.0 / self.n_arms

    def observe(self, t, events):
        pass


POLICY_NAMES = ("mud", "amud", "ducb", "se", "oracle", "random")
POLICY_KINDS = {name: k for k, name in enumerate(POLICY_NAMES)}
