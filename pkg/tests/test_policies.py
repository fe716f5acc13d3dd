import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from banditlab.policies import (POLICY_KINDS, POLICY_NAMES, AmudExp3, DelayedUCB, DeliveredEvent, MudExp3,
                                OraclePolicy, RandomPolicy, SuccessiveElimination, amud_advance,
                                amud_learning_rate, categorical, importance_weighted_estimate, mud_observe,
                                mud_select, mud_update_distribution, oracle_select, random_select,
                                recommended_eta, truncate_learning_rate)

finite_losses = arrays(np.float64, st.integers(2, 12), elements=st.floats(0, 1e6, allow_nan=False))


def test_policy_registry():
    assert POLICY_NAMES == ("mud", "amud", "ducb", "se", "oracle", "random")
    assert [POLICY_KINDS[n] for n in POLICY_NAMES] == list(range(6))


# -- learning rates ---------------------------------------------------------------

def test_recommended_eta_closed_form():
    N, M, T, D = 10, 10, 1000, 50000
    expected = math.sqrt(math.log(N) / (M * (T * M * N * math.e + 4 * D)))
    assert recommended_eta(N, M, T, D) == pytest.approx(expected, rel=1e-15)
    assert recommended_eta(N, M, T, D) == pytest.approx(6.9858e-4, rel=1e-4)


def test_truncation_cap():
    cap = 1.0 / (10 * 10 * math.e * 11)
    assert truncate_learning_rate(1.0, 10, 10, 10) == pytest.approx(cap)
    assert truncate_learning_rate(cap / 2, 10, 10, 10) == cap / 2


def test_amud_learning_rate_halves_every_two_epochs():
    for e in range(0, 12):
        assert amud_learning_rate(e + 2, 10, 10) == pytest.approx(amud_learning_rate(e, 10, 10) / 2)
    assert amud_learning_rate(0, 10, 4) == pytest.approx(math.sqrt(math.log(10)) / 4)


# -- estimator -----------------------------------------------------------------------

def test_importance_weight_values():
    ev = DeliveredEvent(3, 0, 2, 0.6, 0.25)
    assert importance_weighted_estimate(ev, 2) == pytest.approx(2.4)
    assert importance_weighted_estimate(ev, 1) == 0.0
    with pytest.raises(ValueError):
        importance_weighted_estimate(ev._replace(origin_prob=0.0), 2)


def test_estimator_unbiased_small():
    rng = np.random.default_rng(3)
    p = np.array([0.5, 0.3, 0.2])
    loss = np.array([0.9, 0.4, 0.1])
    n = 200_000
    arms = np.searchsorted(np.cumsum(p), rng.random(n), side="right")
    est = np.zeros((n, 3))
    est[np.arange(n), arms] = loss[arms] / p[arms]
    se = est.std(axis=0) / math.sqrt(n)
    assert np.all(np.abs(est.mean(axis=0) - loss) < 3.5 * se)


def test_mud_observe_accumulates():
    L = np.zeros(3)
    events = [DeliveredEvent(1, 0, 1, 0.5, 0.5), DeliveredEvent(1, 1, 1, 0.2, 0.5), DeliveredEvent(2, 0, 0, 1.0, 0.25)]
    L2, ell = mud_observe(L, events)
    assert np.allclose(ell, [4.0, 1.4, 0.0])
    assert np.allclose(L2, ell) and np.all(L == 0)
    with pytest.raises(ValueError):
        mud_observe(L, [DeliveredEvent(1, 0, 0, 0.3, 0.0)])


# -- distributions -------------------------------------------------------------------

def test_uniform_start():
    pol = MudExp3(5, 2, eta=0.01, delta=3)
    assert np.allclose(pol.p, 0.2)


@settings(max_examples=200)
@given(finite_losses, st.floats(1e-8, 10.0))
def test_update_distribution_is_on_simplex(L, eta):
    p = mud_update_distribution(L, eta)
    assert abs(p.sum() - 1.0) <= 1e-12
    assert p.min() > 0


@given(finite_losses, st.floats(1e-6, 1.0), st.floats(-100.0, 100.0))
def test_update_distribution_shift_invariant(L, eta, c):
    assert np.allclose(mud_update_distribution(L, eta), mud_update_distribution(L + c, eta), atol=1e-12)


@given(finite_losses, st.floats(1e-6, 1.0))
def test_smaller_loss_gets_more_mass(L, eta):
    p = mud_update_distribution(L, eta)
    order = np.argsort(L, kind="stable")
    assert np.all(np.diff(p[order]) <= 1e-15)


def test_categorical_inverse_cdf():
    p = np.array([0.2, 0.5, 0.3])
    assert categorical(p, 0.0) == 0
    assert categorical(p, 0.1999) == 0
    assert categorical(p, 0.2) == 1
    assert categorical(p, 0.9999999) == 2
    # u inside the rounding gap above the last partial sum falls back to the last positive arm
    assert categorical(np.array([0.5, 0.5 - 1e-17, 0.0]), 1.0 - 1e-18) == 1


def test_select_frequencies():
    rng = np.random.default_rng(0)
    p = np.array([0.1, 0.6, 0.3])
    draws = np.array([mud_select(p, rng) for _ in range(30000)])
    freq = np.bincount(draws, minlength=3) / draws.size
    assert np.allclose(freq, p, atol=0.015)


def test_random_select_covers_arms():
    rng = np.random.default_rng(1)
    draws = {random_select(4, rng) for _ in range(500)}
    assert draws == {0, 1, 2, 3}


def test_oracle_select_ties_and_shapes():
    assert oracle_select([0.3, 0.1, 0.1]) == 1
    mat = np.array([[0.5, 0.2], [0.5, 0.9]])
    assert oracle_select(mat) == 0


# -- policy objects ----------------------------------------------------------------------

def test_mud_policy_updates_on_delivery_only():
    pol = MudExp3(3, 2, eta=1e-3, delta=2)
    pol.observe(1, [])
    assert np.allclose(pol.p, 1 / 3)
    pol.observe(2, [DeliveredEvent(1, 0, 0, 1.0, 1 / 3)])
    assert pol.p[0] < 1 / 3 and pol.p[1] == pytest.approx(pol.p[2])
    assert pol.eta == pytest.approx(min(1e-3, 1 / (2 * 3 * math.e * 3)))


def test_mud_rejects_bad_parameters():
    with pytest.raises(ValueError):
        MudExp3(3, 2, eta=0.0, delta=2)
    with pytest.raises(ValueError):
        MudExp3(3, 2, eta=0.1, delta=0)


@pytest.mark.parametrize("cum,epoch,M,expected", [
    (0, 0, 10, 0), (9, 0, 10, 0), (10, 0, 10, 1), (19, 1, 10, 1), (20, 1, 10, 2),
    (79, 1, 10, 3), (80, 1, 10, 4), (1, 0, 1, 1), (1000, 0, 1, 10),
])
def test_amud_advance_thresholds(cum, epoch, M, expected):
    assert amud_advance(cum, epoch, M) == expected


def test_amud_epoch_resets_estimates():
    pol = AmudExp3(3, 1)
    assert pol.epoch == 0 and pol.eta == 1.0
    pol.observe(1, [])  # V_1 = 1 -> epoch 1
    assert pol.epoch == 1 and pol.advance_log == [(1, 1)]
    pol.observe(2, [DeliveredEvent(1, 0, 2, 0.5, 1 / 3)])  # V_2 = 1, sum 2 -> epoch 2
    assert pol.epoch == 2
    assert pol.L[2] == pytest.approx(1.5)
    pol.observe(3, [])  # V_3 = 2, sum 4 -> epoch 3 and L reset before this batch
    assert pol.epoch == 3 and np.all(pol.L == 0)
    assert pol.eta == pytest.approx(math.sqrt(math.log(3) / 8))


def test_amud_counts_missing_samples():
    pol = AmudExp3(4, 3)
    pol.observe(1, [])
    pol.observe(2, [DeliveredEvent(1, j, 0, 0.2, 0.25) for j in range(3)])
    assert pol.last_missing == 3 and pol.cum_missing == 6


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 8), st.integers(1, 4), st.lists(st.lists(st.tuples(st.integers(0, 7), st.floats(0, 1)),
                                                                  max_size=6), min_size=1, max_size=40))
def test_exp_weight_policies_stay_on_simplex(N, M, batches):
    for pol in (MudExp3(N, M, eta=0.05, delta=3), AmudExp3(N, M)):
        for t, batch in enumerate(batches, start=1):
            pol.select(t, np.random.default_rng(t))
            events = [DeliveredEvent(max(t - 1, 1), 0, a % N, loss, float(pol.p[a % N])) for a, loss in batch]
            pol.observe(t, events)
            assert abs(pol.p.sum() - 1.0) <= 1e-12 and pol.p.min() > 0


def test_ducb_tries_every_arm_then_prefers_low_loss():
    pol = DelayedUCB(3, 1)
    assert pol.select(1) == 0
    pol.observe(1, [DeliveredEvent(1, 0, 0, 0.9, 1.0)])
    assert pol.select(2) == 1
    pol.observe(2, [DeliveredEvent(2, 0, 1, 0.1, 1.0)])
    assert pol.select(3) == 2
    pol.observe(3, [DeliveredEvent(3, 0, 2, 0.5, 1.0)])
    assert pol.select(4) == 1


def test_ducb_lower_confidence_rule():
    pol = DelayedUCB(2, 1)
    pol.counts[:] = [100, 1]
    pol.sums[:] = [10.0, 0.9]
    t = 50
    idx = pol.sums / pol.counts - np.sqrt(2 * math.log(t) / pol.counts)
    assert pol.select(t) == int(np.argmin(idx))


def test_se_round_robin_and_elimination():
    pol = SuccessiveElimination(3, 1)
    assert [pol.select(t) for t in (1, 2, 3, 4)] == [0, 1, 2, 0]
    pol.counts[:] = [1000, 1000, 1000]
    pol.sums[:] = [100.0, 900.0, 110.0]
    pol.observe(500, [])
    assert pol.active.tolist() == [True, False, True]
    picks = {pol.select(t) for t in range(5, 12)}
    assert picks == {0, 2}


def test_se_waits_for_unsampled_arms():
    pol = SuccessiveElimination(3, 1)
    pol.counts[:] = [1000, 1000, 0]
    pol.sums[:] = [0.0, 1000.0, 0.0]
    pol.observe(100, [])
    assert pol.active.all()


def test_oracle_and_random_policies():
    assert OraclePolicy(4, 2).select(10) == 2
    with pytest.raises(ValueError):
        OraclePolicy(4, 4)
    pol = RandomPolicy(5)
    assert pol.probability(3) == pytest.approx(0.2)


def test_ducb_example_prefers_low_mean_at_equal_counts():
    # n = (100, 100), means (0.2, 0.8), t = 200: the first arm's index is lower
    pol = DelayedUCB(2, 1)
    pol.counts[:] = [100, 100]
    pol.sums[:] = [20.0, 80.0]
    assert pol.select(200) == 0


def test_ducb_running_mean():
    pol = DelayedUCB(3, 2)
    pol.observe(5, [DeliveredEvent(1, 0, 2, 0.4, 1.0), DeliveredEvent(1, 1, 2, 0.6, 1.0)])
    assert pol.counts[2] == 2 and pol.means()[2] == pytest.approx(0.5)


def test_se_eliminates_clearly_worse_arm():
    rng = np.random.default_rng(0)
    pol = SuccessiveElimination(2, 1)
    means = (0.1, 0.9)
    eliminated_at = None
    for t in range(1, 2000):
        a = pol.select(t)
        pol.observe(t, [DeliveredEvent(t, 0, a, float(np.clip(rng.normal(means[a], 0.05), 0, 1)), 1.0)])
        if eliminated_at is None and not pol.active[1]:
            eliminated_at = t
    assert eliminated_at is not None and pol.active.tolist() == [True, False]
    assert {pol.select(t) for t in range(2000, 2010)} == {0}


def test_se_keeps_all_arms_when_means_equal():
    # 100 seeded runs, 5 identical arms: no elimination in any run
    removed = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        pol = SuccessiveElimination(5, 1)
        for t in range(1, 401):
            a = pol.select(t)
            pol.observe(t, [DeliveredEvent(t, 0, a, float(rng.random()), 1.0)])
        removed += int((~pol.active).sum())
    assert removed == 0


def test_amud_epoch_advance_makes_next_distribution_uniform():
    pol = AmudExp3(4, 1)
    pol.observe(1, [])
    pol.observe(2, [DeliveredEvent(1, 0, 1, 0.9, 0.25)])
    assert not np.allclose(pol.p, 0.25)
    pol.observe(3, [])  # advances the epoch, zeroing L before an empty batch
    assert np.allclose(pol.p, 0.25)
