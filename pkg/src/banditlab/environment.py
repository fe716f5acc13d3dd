"""Oblivious adversary: segmented truncated-Gaussian losses and delay tables.

Rounds are 1-based (``t in [1, T]``); arms and users are 0-based indices.
Losses are never stored up front.  Each value ``l_i^j(t)`` is produced by a
counter-based keyed hash of ``(seed, t, i, j, attempt)`` so any entry can be
re-derived on demand and every query for the same key is bit-identical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import special

MAX_REJECTION_ATTEMPTS = 10_000

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_S32 = np.uint64(32)
_INV_2_53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True)
def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def stream_base(key, t, i, j):
    """64-bit state of the splitmix64 stream owned by ``(key, t, i, j)``."""
    h = _mix64(np.uint64(key) + _GOLDEN * (np.uint64(t) + np.uint64(1)))
    return _mix64(h ^ ((np.uint64(i) << _S32) | np.uint64(j)))


@njit(cache=True, nogil=True)
def stream_uniform(base, c):
    """Counter ``c`` of the stream at ``base``, uniform in [0, 1)."""
    return float(_mix64(base + _GOLDEN * (np.uint64(c) + np.uint64(1))) >> _S11) * _INV_2_53


@njit(cache=True, nogil=True)
def keyed_truncated_normal(key, t, i, j, mean, std, lo, hi):
    # Box-Muller pairs from consecutive counters, rejected until inside [lo, hi].
    base = stream_base(key, t, i, j)
    for attempt in range(MAX_REJECTION_ATTEMPTS):
        u1 = stream_uniform(base, 2 * attempt)
        u2 = stream_uniform(base, 2 * attempt + 1)
        r = math.sqrt(-2.0 * math.log(1.0 - u1))
        x = mean + std * r * math.cos(2.0 * math.pi * u2)
        if lo <= x <= hi:
            return x
        x = mean + std * r * math.sin(2.0 * math.pi * u2)
        if lo <= x <= hi:
            return x
    return np.nan


@njit(cache=True, nogil=True)
def _round_losses(key, t, arm, n_users, mean, std, out):
    for j in range(n_users):
        out[j] = keyed_truncated_normal(key, t, arm, j, mean, std, 0.0, 1.0)


@njit(cache=True, nogil=True)
def _arm_round_totals(key, means, stds, seg_of_round, n_users):
    horizon = seg_of_round.shape[0]
    n_arms = means.shape[0]
    out = np.empty((horizon, n_arms))
    for t in range(1, horizon + 1):
        s = seg_of_round[t - 1]
        for i in range(n_arms):
            acc = 0.0
            for j in range(n_users):
                acc += keyed_truncated_normal(key, t, i, j, means[i, s], stds[i, s], 0.0, 1.0)
            out[t - 1, i] = acc
    return out


@njit(cache=True, nogil=True)
def _loss_table(key, means, stds, seg_of_round, n_users):
    horizon = seg_of_round.shape[0]
    n_arms = means.shape[0]
    out = np.empty((horizon, n_arms, n_users))
    for t in range(1, horizon + 1):
        s = seg_of_round[t - 1]
        for i in range(n_arms):
            for j in range(n_users):
                out[t - 1, i, j] = keyed_truncated_normal(
                    key, t, i, j, means[i, s], stds[i, s], 0.0, 1.0
                )
    return out


def segment_starts(horizon: int, tran_num: int) -> np.ndarray:
    """First round of each of ``tran_num`` near-equal segments of [1, horizon]."""
    return np.array([1 + (k * horizon) // tran_num for k in range(tran_num)], dtype=np.int64)


@dataclass(frozen=True)
class SegmentedLossSpec:
    num_arms: int
    num_users: int
    horizon: int
    boundaries: np.ndarray  # first round of each segment, starts at 1
    means: np.ndarray  # (num_arms, n_segments)
    stds: np.ndarray  # (num_arms, n_segments)

    def __post_init__(self):
        b = np.asarray(self.boundaries)
        if self.num_arms < 1 or self.num_users < 1 or self.horizon < 1:
            raise ValueError("dimensions must be positive")
        if b.ndim != 1 or b.size == 0 or b[0] != 1 or np.any(np.diff(b) <= 0) or b[-1] > self.horizon:
            raise ValueError(f"bad segment boundaries {b!r}")
        shape = (self.num_arms, b.size)
        if np.shape(self.means) != shape or np.shape(self.stds) != shape:
            raise ValueError(f"means/stds must have shape {shape}")
        if np.any(np.asarray(self.stds) <= 0):
            raise ValueError("stds must be positive")

    @property
    def tran_num(self) -> int:
        return int(len(self.boundaries))

    def segment_of(self, t):
        """0-based segment index of round(s) ``t``."""
        return np.searchsorted(self.boundaries, t, side="right") - 1

    def segment_of_round(self) -> np.ndarray:
        return self.segment_of(np.arange(1, self.horizon + 1)).astype(np.int64)

    def segment_lengths(self) -> np.ndarray:
        ends = np.append(self.boundaries[1:], self.horizon + 1)
        return ends - self.boundaries

    def to_dict(self) -> dict:
        return {
            "num_arms": self.num_arms,
            "num_users": self.num_users,
            "horizon": self.horizon,
            "boundaries": [int(b) for b in self.boundaries],
            "means": np.asarray(self.means).tolist(),
            "stds": np.asarray(self.stds).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SegmentedLossSpec":
        return cls(
            num_arms=int(d["num_arms"]),
            num_users=int(d["num_users"]),
            horizon=int(d["horizon"]),
            boundaries=np.asarray(d["boundaries"], dtype=np.int64),
            means=np.asarray(d["means"], dtype=float),
            stds=np.asarray(d["stds"], dtype=float),
        )


def build_adversarial_env(N: int, M: int, T: int, tran_num: int, seed) -> SegmentedLossSpec:
    """Draw per-(arm, segment) means in [0, 1] and stds in [0.1, 0.2]."""
    if N < 2 or M < 1 or T < 1 or tran_num < 1:
        raise ValueError(f"need N >= 2, M >= 1, T >= 1, tran_num >= 1 (got N={N}, M={M}, T={T}, tran_num={tran_num})")
    if tran_num > T:
        raise ValueError(f"tran_num={tran_num} exceeds horizon T={T}")
    rng = np.random.default_rng(seed)
    means = rng.uniform(0.0, 1.0, size=(N, tran_num))
    stds = rng.uniform(0.1, 0.2, size=(N, tran_num))
    return SegmentedLossSpec(N, M, T, segment_starts(T, tran_num), means, stds)


def sample_truncated_gaussian(mean, std, lo, hi, rng: np.random.Generator, size=None,
                              max_iter: int = MAX_REJECTION_ATTEMPTS):
    """Gaussian(mean, std) conditioned on [lo, hi], drawn by rejection."""
    if not lo < hi:
        raise ValueError("need lo < hi")
    if std <= 0:
        raise ValueError("need std > 0")
    n = 1 if size is None else int(np.prod(size))
    out = np.empty(n)
    todo = np.arange(n)
    for _ in range(max_iter):
        x = rng.normal(mean, std, size=todo.size)
        ok = (x >= lo) & (x <= hi)
        out[todo[ok]] = x[ok]
        todo = todo[~ok]
        if todo.size == 0:
            return out[0] if size is None else out.reshape(size)
    raise RuntimeError(
        f"truncated normal rejection did not terminate after {max_iter} rounds "
        f"(mean={mean}, std={std}, range=[{lo}, {hi}])"
    )


def truncated_normal_mean(mean, std, lo=0.0, hi=1.0):
    """Analytic mean of Gaussian(mean, std) restricted to [lo, hi]."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    a = (lo - mean) / std
    b = (hi - mean) / std
    mass = special.ndtr(b) - special.ndtr(a)
    pdf = (np.exp(-0.5 * a * a) - np.exp(-0.5 * b * b)) / math.sqrt(2 * math.pi)
    return mean + std * pdf / mass


def _check_index(spec: SegmentedLossSpec, t, i, j=None):
    if not 1 <= t <= spec.horizon:
        raise IndexError(f"round {t} outside [1, {spec.horizon}]")
    if not 0 <= i < spec.num_arms:
        raise IndexError(f"arm {i} outside [0, {spec.num_arms})")
    if j is not None and not 0 <= j < spec.num_users:
        raise IndexError(f"user {j} outside [0, {spec.num_users})")


def loss_key(seed) -> int:
    """Normalise any seed (int or SeedSequence) into a 64-bit hash key."""
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.generate_state(1, np.uint64)[0])
    return int(seed) & 0xFFFFFFFFFFFFFFFF


def realize_loss(spec: SegmentedLossSpec, seed, t: int, i: int, j: int) -> float:
    _check_index(spec, t, i, j)
    s = int(spec.segment_of(t))
    x = keyed_truncated_normal(
        np.uint64(loss_key(seed)), t, i, j, float(spec.means[i, s]), float(spec.stds[i, s]), 0.0, 1.0
    )
    if math.isnan(x):
        raise RuntimeError(f"rejection cap hit realizing loss at t={t}, i={i}, j={j}")
    return x


def expected_loss(spec: SegmentedLossSpec, t: int, i: int) -> float:
    _check_index(spec, t, i)
    s = int(spec.segment_of(t))
    return float(truncated_normal_mean(spec.means[i, s], spec.stds[i, s]))


def expected_loss_matrix(spec: SegmentedLossSpec) -> np.ndarray:
    """Per-round expected loss of every arm, shape (T, N)."""
    seg_means = truncated_normal_mean(spec.means, spec.stds)  # (N, S)
    return seg_means[:, spec.segment_of_round()].T.copy()


class LossRealization:
    """Lazy view of the full oblivious table ``l_i^j(t)`` for one seed."""

    def __init__(self, spec: SegmentedLossSpec, seed):
        self.spec = spec
        self.key = np.uint64(loss_key(seed))
        self._seg = spec.segment_of_round()
        self._means = np.ascontiguousarray(spec.means, dtype=float)
        self._stds = np.ascontiguousarray(spec.stds, dtype=float)

    def __call__(self, t: int, i: int, j: int) -> float:
        return realize_loss(self.spec, self.key, t, i, j)

    def round_losses(self, t: int, arm: int) -> np.ndarray:
        _check_index(self.spec, t, arm)
        s = self._seg[t - 1]
        out = np.empty(self.spec.num_users)
        _round_losses(self.key, t, arm, self.spec.num_users, self._means[arm, s], self._stds[arm, s], out)
        return out

    def arm_round_totals(self) -> np.ndarray:
        """``sum_j l_i^j(t)`` for every round and arm, shape (T, N)."""
        return _arm_round_totals(self.key, self._means, self._stds, self._seg, self.spec.num_users)

    def table(self) -> np.ndarray:
        """Materialised (T, N, M) table; only sensible for small instances."""
        return _loss_table(self.key, self._means, self._stds, self._seg, self.spec.num_users)


@dataclass(frozen=True)
class DelaySchedule:
    delays: np.ndarray  # (T, M) ints, row t-1 holds d_t^j
    d_max: int

    def __post_init__(self):
        d = np.asarray(self.delays)
        if d.ndim != 2:
            raise ValueError("delay table must be 2-D (rounds x users)")
        if self.d_max < 1:
            raise ValueError("d_max must be >= 1")
        if d.size and (d.min() < 1 or d.max() > self.d_max):
            raise ValueError(f"delays must lie in [1, {self.d_max}]")

    @property
    def horizon(self) -> int:
        return self.delays.shape[0]

    @property
    def num_users(self) -> int:
        return self.delays.shape[1]

    def __getitem__(self, tj):
        t, j = tj
        return int(self.delays[t - 1, j])

    def full_sum(self) -> int:
        return int(self.delays.sum())

    def delivered_sum(self) -> int:
        """Sum of delays over events that arrive by the horizon."""
        t = np.arange(1, self.horizon + 1)[:, None]
        d = self.delays
        return int(d[t + d <= self.horizon].sum())

    def omega_count(self) -> int:
        t = np.arange(1, self.horizon + 1)[:, None]
        return int((t + self.delays > self.horizon).sum())

    @classmethod
    def from_table(cls, table, d_max: int | None = None) -> "DelaySchedule":
        table = np.asarray(table, dtype=np.int64)
        return cls(table, int(table.max()) if d_max is None else int(d_max))


def build_delay_schedule(M: int, T: int, d_max: int, seed, kind: str = "uniform",
                         geometric_p: float = 0.2) -> DelaySchedule:
    """Delay table with every entry in [1, d_max].

    ``kind`` is ``uniform`` (integers on [1, d_max]), ``constant`` (all equal to
    d_max) or ``geometric`` (Geometric(p) conditioned on <= d_max).
    """
    if d_max < 1 or M < 1 or T < 1:
        raise ValueError("M, T and d_max must be positive")
    rng = np.random.default_rng(seed)
    if kind == "uniform":
        table = rng.integers(1, d_max + 1, size=(T, M), dtype=np.int64)
    elif kind == "constant":
        table = np.full((T, M), d_max, dtype=np.int64)
    elif kind == "geometric":
        # inverse CDF of the geometric law truncated to [1, d_max]
        u = rng.random(size=(T, M))
        q = 1.0 - geometric_p
        tail = 1.0 - q ** d_max
        table = np.ceil(np.log1p(-u * tail) / math.log(q)).astype(np.int64)
        table = np.clip(table, 1, d_max)
    else:
        raise ValueError(f"unknown delay kind {kind!r}")
    return DelaySchedule(table, d_max)


@njit(cache=True, nogil=True)
def table_totals(table):
    """``sum_j`` of a (T, N, M) loss table, summed in user order."""
    T, N, M = table.shape
    out = np.empty((T, N))
    for t in range(T):
        for i in range(N):
            acc = 0.0
            for j in range(M):
                acc += table[t, i, j]
            out[t, i] = acc
    return out
