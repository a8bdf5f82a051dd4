import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from incoherence import (Policy, PreconditionError, check_deterministic_factorization,
                         limit_policy, oracle_check_qv, random_mdp, random_prior,
                         soft_values, success_probability)
from incoherence.soft_values import log_success


def test_mountain_root_values(mountain):
    sv = soft_values(mountain, Policy.uniform(mountain))
    q = sv.q_row(mountain, 0, "start")
    assert q[0] == pytest.approx(math.log(1 / 2), abs=1e-15)
    assert q[1] == pytest.approx(math.log(3 / 4), abs=1e-15)
    assert sv.v[0, mountain.state_index("start")] == pytest.approx(math.log(5 / 8), abs=1e-15)
    np.testing.assert_array_equal(sv.v[-1], mountain.terminal_reward)


def test_continuation_changes_q(mountain):
    pi = Policy.uniform(mountain).with_rows(mountain, {"mountain": [1.0, 0.0]})
    assert soft_values(mountain, pi).q_row(mountain, 0, "start")[0] == 0.0


def test_values_are_consistent_logs(counter):
    pi = Policy.uniform(counter)
    sv = soft_values(counter, pi)
    assert np.all(sv.q <= 0) and np.all(sv.v <= 0)
    lhs = sv.v[:-1]
    rhs = np.log(np.sum(pi.table * np.exp(sv.q), axis=-1))
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


@pytest.mark.parametrize("name", ["mountain_race", "temperature_counter", "stability_tree"])
def test_qv_oracle_on_builtins(name):
    from incoherence import builtin_example
    m = builtin_example(name)
    report = oracle_check_qv(m, Policy.uniform(m))
    assert report.passed and report.max_gap <= 1e-12


def test_qv_zero_rewards():
    m = random_mdp(3)
    m = m.replace(step_reward=np.zeros_like(m.step_reward),
                  terminal_reward=np.zeros_like(m.terminal_reward))
    # Dirichlet transition rows sum to 1 only up to rounding
    np.testing.assert_allclose(soft_values(m, Policy.uniform(m)).q, 0.0, atol=1e-14)
    assert oracle_check_qv(m, Policy.uniform(m)).max_gap <= 1e-14


def test_limit_policy(mountain):
    lim = limit_policy(mountain, Policy.uniform(mountain))
    np.testing.assert_array_equal(lim.row(mountain, 1, "mountain"), [1, 0])
    np.testing.assert_array_equal(lim.row(mountain, 0, "start"), [0, 1])
    np.testing.assert_array_equal(lim.row(mountain, 1, "forest"), [0.5, 0.5])


def test_limit_policy_all_dead_row_is_uniform(mountain):
    terminal = np.full(mountain.n_states, -np.inf)
    m = mountain.replace(terminal_reward=terminal)
    np.testing.assert_array_equal(limit_policy(m, Policy.uniform(m)).table, 0.5)


def test_factorization_builtin(mountain, counter):
    report = check_deterministic_factorization(mountain, Policy.uniform(mountain))
    assert report.max_gap <= 1e-12
    with pytest.raises(PreconditionError):
        check_deterministic_factorization(counter, Policy.uniform(counter))


def test_factorization_zero_rewards_is_prior(mountain):
    m = mountain.replace(terminal_reward=np.zeros(mountain.n_states))
    report = check_deterministic_factorization(m, Policy.uniform(m))
    np.testing.assert_allclose(report.data["global"], 0.25)
    np.testing.assert_allclose(report.data["local"], 0.25)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_success_matches_initial_value(seed):
    m = random_mdp(seed)
    pi = random_prior(m, seed)
    p = success_probability(m, pi)
    assert math.exp(log_success(m, pi)) == pytest.approx(p, abs=1e-10)
    assert p == pytest.approx(oracles.success(m, pi.table), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 2.0))
def test_raising_a_reward_never_lowers_q(seed, bump):
    m = random_mdp(seed)
    pi = random_prior(m, seed)
    rng = np.random.default_rng(seed)
    s, a = rng.integers(m.n_states), rng.integers(m.n_actions)
    step = m.step_reward.copy()
    step[s, a] = min(0.0, step[s, a] + bump) if np.isfinite(step[s, a]) else -bump
    before, after = soft_values(m, pi).q, soft_values(m.replace(step_reward=step), pi).q
    assert np.all(after >= before - 1e-12)


def test_limit_policy_scale_invariant():
    m = random_mdp(11)
    pi = random_prior(m, 11)
    # scaling exp Q by c > 0 is a shift of Q; shifting the terminal layer does it
    shifted = m.replace(terminal_reward=m.terminal_reward - 0.7)
    np.testing.assert_array_equal(limit_policy(m, pi).table, limit_policy(shifted, pi).table)
