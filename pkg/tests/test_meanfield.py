import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rmab_mfp.bounds import truncation_rule
from rmab_mfp.core import stationary_instance, step_cost
from rmab_mfp.examples import tiny_instance
from rmab_mfp.lp import FluidPlan, mean_field_value
from rmab_mfp.meanfield import (MfpPolicy, OneShotPolicy, bucket_action, bucket_sample, evaluation_horizon,
                                floor_action, mfp_step, one_shot_policy_step, round_counts, rounding_l1)
from rmab_mfp.examples import example1


def one_cell_instance(zero_action=1, budget=100.0):
    """One cluster, one populated state, two actions; ``zero_action`` is free, the other costs 1."""
    P = np.array([[[[1.0, 0.0], [0.0, 1.0]]] * 2])
    C = np.ones((1, 2, 2))
    C[:, :, zero_action] = 0.0
    return stationary_instance(P, np.zeros((1, 2, 2)), C, budget, [10], 2)


def admissible_roundings(x, m):
    lo, hi = np.floor(x).astype(int), np.ceil(x).astype(int)
    return {z for z in itertools.product(*[range(a, b + 1) for a, b in zip(lo, hi)]) if sum(z) == m}


# integer rounding ------------------------------------------------------------------

def test_round_counts_identity_on_integers():
    assert round_counts([2, 0, 3], 5).tolist() == [2, 0, 3]


def test_round_counts_half_half():
    oracle = admissible_roundings(np.array([0.5, 0.5, 1.0]), 2)
    assert oracle == {(1, 0, 1), (0, 1, 1)}
    assert tuple(round_counts([0.5, 0.5, 1.0], 2)) in oracle


def test_round_counts_uneven_fractions():
    x = np.array([1.2, 0.3, 0.5])
    z = round_counts(x, 2)
    assert tuple(z) in admissible_roundings(x, 2)
    assert np.max(np.abs(z - x)) <= 1


@given(st.lists(st.floats(0, 6, allow_nan=False), min_size=1, max_size=8), st.integers(0, 1000))
def test_round_counts_properties(raw, salt):
    x = np.array(raw)
    frac = x.sum() - math.floor(x.sum())
    x[salt % len(x)] += (1 - frac) if frac > 1e-6 else 0.0  # make the sum integral
    m = int(round(x.sum()))
    z = round_counts(x, m)
    assert z.sum() == m and np.all(z >= 0)
    assert np.all(np.abs(z - x) < 1 + 1e-9)
    assert np.all((z == np.floor(x + 1e-9)) | (z == np.ceil(x - 1e-9)))


def test_round_counts_rejects_non_integer_sum():
    with pytest.raises(ValueError):
        round_counts([0.5, 0.2], 1)


# bucket sampling -------------------------------------------------------------------

@pytest.mark.parametrize("u", [0.0, 0.25, 0.999])
def test_bucket_sample_deterministic_entries(u):
    assert bucket_sample([1, 0, 1], u).tolist() == [0, 2]


def test_bucket_sample_symmetric_pair():
    rng = np.random.default_rng(0)
    hits = [bucket_sample([0.5, 0.5], u).tolist() for u in rng.random(20000)]
    assert all(len(h) == 1 for h in hits)
    assert np.mean([h == [0] for h in hits]) == pytest.approx(0.5, abs=0.02)


def test_bucket_sample_marginal_matches_weights():
    rng = np.random.default_rng(1)
    draws = 100_000
    first = sum(bucket_sample([0.3, 0.7], u)[0] == 0 for u in rng.random(draws))
    sigma = math.sqrt(0.3 * 0.7 / draws)
    assert abs(first / draws - 0.3) <= 3 * sigma


@given(st.lists(st.floats(0, 1, allow_nan=False), min_size=2, max_size=9), st.floats(0, 0.999999))
def test_bucket_sample_returns_k_distinct(raw, u):
    x = np.array(raw)
    k = math.floor(x.sum())
    if k == 0:
        x = np.zeros_like(x)
    else:
        x = x * (k / x.sum())
        if x.max() > 1:
            return
    s = bucket_sample(x, u)
    assert len(s) == k == len(set(s.tolist()))
    assert all(x[i] > 0 for i in s)


def test_bucket_action_integral_is_deterministic():
    inst = one_cell_instance()
    mu = np.array([[3, 0]])
    alpha = np.array([[[1.0, 2.0], [0.0, 0.0]]])
    for seed in range(5):
        assert np.array_equal(bucket_action(inst, 1, mu, alpha, np.random.default_rng(seed)), alpha)


def test_bucket_action_is_unbiased():
    inst = one_cell_instance()
    mu = np.array([[3, 0]])
    alpha = np.array([[[1.4, 1.6], [0.0, 0.0]]])
    rng = np.random.default_rng(2)
    reps = 4000
    draws = np.array([bucket_action(inst, 1, mu, alpha, rng)[0, 0] for _ in range(reps)])
    se = draws.std(axis=0, ddof=1) / math.sqrt(reps)
    assert np.all(np.abs(draws.mean(axis=0) - alpha[0, 0]) <= 4 * se + 1e-12)
    assert np.all(draws.sum(axis=1) == 3)


# floor rounding inside the planner ------------------------------------------------

def test_floor_action_identity_on_integral_plan():
    inst = one_cell_instance()
    alpha = np.array([[[2.0, 1.0], [0.0, 0.0]]])
    assert np.array_equal(floor_action(inst, 1, [[3, 0]], alpha), alpha)


def test_floor_action_hand_trace():
    # three arms, fluid row (1.6, 1.4), second action free -> floors (1, 1) plus one leftover
    inst = one_cell_instance(zero_action=1)
    played = floor_action(inst, 1, [[3, 0]], np.array([[[1.6, 1.4], [0.0, 0.0]]]))
    assert played[0, 0].tolist() == [1, 2]


def _plan(mu, alpha):
    return FluidPlan(t0=1, mu=np.asarray(mu, float)[None], alpha=np.asarray(alpha, float)[None],
                     value=0.0, solution=None)


def test_one_shot_scales_plan_to_realized_count():
    inst = one_cell_instance(zero_action=1)
    plan = _plan([[10, 0]], [[[5, 5], [0, 0]]])
    played = one_shot_policy_step(inst, 1, [[8, 0]], plan)
    assert played[0, 0].tolist() == [4, 4]


def test_one_shot_identity_and_empty_cells():
    inst = one_cell_instance(zero_action=1)
    plan = _plan([[10, 0]], [[[3, 7], [0, 0]]])
    assert one_shot_policy_step(inst, 1, [[10, 0]], plan)[0, 0].tolist() == [3, 7]
    assert one_shot_policy_step(inst, 1, [[0, 10]], plan)[0].tolist() == [[0, 0], [0, 10]]


def test_one_shot_unplanned_cell_goes_to_zero_cost_action():
    inst = one_cell_instance(zero_action=1)
    plan = _plan([[10, 0]], [[[5, 5], [0, 0]]])
    played = one_shot_policy_step(inst, 1, [[7, 3]], plan)
    assert played[0, 1].tolist() == [0, 3]


@given(st.integers(0, 300), st.integers(0, 1000))
def test_mfp_step_is_safe_and_conserving(seed, salt):
    inst, _ = tiny_instance(seed)
    rng = np.random.default_rng(salt)
    mu = np.stack([rng.multinomial(int(n), np.full(inst.num_states, 1 / inst.num_states))
                   for n in inst.cluster_sizes])
    t = int(rng.integers(1, inst.horizon + 1))
    played, state = mfp_step(inst, t, mu)
    assert np.array_equal(played.sum(axis=2), mu)
    assert step_cost(inst, t, played) <= inst.budget(t) + 1e-12
    K, S, A = played.shape
    assert 0 <= state.slack <= K * S * A
    assert rounding_l1(state.plan.alpha_at(t), played) <= 2 * K * S * A
    pol = OneShotPolicy()
    pol.reset(inst, mu)
    shot = pol.act(inst, t, mu, None)
    assert np.array_equal(shot.sum(axis=2), mu)
    assert step_cost(inst, t, shot) <= inst.budget(t) + 1e-12


@given(st.integers(0, 300))
def test_bucket_mfp_excess_is_bounded(seed):
    inst, mu = tiny_instance(seed)
    played, state = mfp_step(inst, 1, mu, rounding="bucket", rng=np.random.default_rng(seed))
    K, S, A = played.shape
    assert np.array_equal(played.sum(axis=2), mu)
    assert state.excess_cost <= K * S * A * inst.c_max


def test_bucket_without_rng_is_an_error():
    inst, mu = tiny_instance(0)
    with pytest.raises(ValueError):
        mfp_step(inst, 1, mu, rounding="bucket")


def test_policy_caches_plans():
    inst, start = example1(n=3, horizon=6)
    pol = MfpPolicy()
    pol.reset(inst, start)
    a = pol.plan_for(inst, 1, start)
    assert pol.plan_for(inst, 1, start) is a
    assert pol.step_info() is None


# truncation horizons ---------------------------------------------------------------

def test_truncation_rule_values():
    assert truncation_rule(100, 1, 2) == 16
    assert truncation_rule(6, 2, 3) == 3
    hp = truncation_rule(1000, 4, 2, 0.05)
    assert hp == math.ceil(math.sqrt(2000) / math.sqrt(math.log(2) * 8 + math.log(20)) + 1)


def test_evaluation_horizon_lengthens_for_tail():
    inst, _ = example1(n=20, gamma=0.9)
    assert evaluation_horizon(inst) == truncation_rule(40, 2, 3)
    T = evaluation_horizon(inst, rel_tail=1e-3)
    assert 0.9 ** (T - 1) <= 1e-3 < 0.9 ** (T - 2)


def test_mean_field_value_plan_feeds_mfp_step():
    inst, start = example1(n=4, horizon=5)
    v, plan = mean_field_value(inst, start)
    played, state = mfp_step(inst, 1, start, plan=plan)
    assert state.plan is plan and state.fluid_reward == pytest.approx(0.0)
    assert played[0, 0, 1] == 4  # the plan engages every reliable arm
