import math
from fractions import Fraction as Fr

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from conftest import fig2_policy
from incoherence import (ArgmaxUniform, Policy, PreconditionError, Softmax,
                         check_greedy_coherence, check_order_respecting, f_soft_policy,
                         fixpoint_step, goal_condition, incoherence, iterate_coherence,
                         kappa_optimality_probe, limit_policy, random_mdp, random_prior)


def test_softmax_edge_rows():
    f = Softmax(1.0)
    np.testing.assert_allclose(f([0.0, -np.inf]), [1, 0])
    np.testing.assert_allclose(f([-np.inf, -np.inf, -np.inf]), [1 / 3] * 3)
    np.testing.assert_allclose(f([1.0, 2.0]), f([101.0, 102.0]))
    with pytest.raises(ValueError):
        Softmax(0.0)


def test_argmax_uniform_ties():
    np.testing.assert_array_equal(ArgmaxUniform()([-1.0, -1.0]), [0.5, 0.5])
    np.testing.assert_array_equal(ArgmaxUniform()([-2.0, -1.0, -np.inf]), [0, 1, 0])


def test_one_coherence_step(mountain):
    pi = f_soft_policy(mountain, Policy.uniform(mountain), Softmax(1.0))
    np.testing.assert_allclose(pi.row(mountain, 0, "start"), [2 / 5, 3 / 5], atol=1e-12)
    np.testing.assert_allclose(pi.row(mountain, 1, "mountain"), [1, 0], atol=1e-12)


def test_argmax_selector_is_limit_policy():
    m = random_mdp(5)
    pi = random_prior(m, 5)
    np.testing.assert_array_equal(f_soft_policy(m, pi, ArgmaxUniform()).table,
                                  limit_policy(m, pi).table)


def test_iterated_coherence_golden(mountain):
    trace = iterate_coherence(mountain, Policy.uniform(mountain), Softmax(1.0), 2)
    expected = oracles.mountain_coherence_root(2)
    for k in (1, 2):
        up = trace[k].policy.row(mountain, 0, "start")[0]
        assert up == pytest.approx(float(expected[k]), abs=1e-12)
    assert expected[1] == Fr(2, 5) and expected[2] == Fr(4, 7)
    final = trace[2].policy
    np.testing.assert_allclose(final.row(mountain, 1, "mountain"), [1, 0], atol=1e-12)
    np.testing.assert_allclose(final.row(mountain, 1, "forest"), [0.5, 0.5], atol=1e-12)
    assert trace[2].kappa <= 1e-10


def test_fixpoint_after_horizon(mountain):
    u = Policy.uniform(mountain)
    at_t = iterate_coherence(mountain, u, Softmax(1.0), mountain.horizon).final
    later = iterate_coherence(mountain, u, Softmax(1.0), mountain.horizon + 5).final
    np.testing.assert_allclose(at_t.table, later.table, atol=1e-12, rtol=0)


def test_fig2_policy_is_coherent(mountain):
    assert incoherence(mountain, fig2_policy(mountain), Softmax(1.0)) <= 1e-10


def test_incoherence_of_first_posterior(mountain):
    g1 = goal_condition(mountain, Policy.uniform(mountain))
    kappa = incoherence(mountain, g1, Softmax(1.0))
    exact = oracles.two_point_kl(2 / 5, 4 / 7)
    assert kappa == pytest.approx(exact, abs=1e-12)
    assert kappa == pytest.approx(0.0592133643972, abs=1e-12)


def test_zero_reward_mdp_is_coherent():
    m = random_mdp(7)
    m = m.replace(step_reward=np.zeros_like(m.step_reward),
                  terminal_reward=np.zeros_like(m.terminal_reward))
    for delta in (0.1, 1.0, 5.0):
        assert incoherence(m, Policy.uniform(m), Softmax(delta)) <= 1e-14


def test_order_respecting():
    assert check_order_respecting(Softmax(1.0), 1000, 4).passed
    assert check_order_respecting(ArgmaxUniform(), 1000, 4).passed

    def reversed_softmax(x):
        return Softmax(1.0)(-np.asarray(x))
    report = check_order_respecting(reversed_softmax, 200, 4)
    assert not report.passed and report.checks[0].measured > 0


def test_kappa_probe(mountain):
    deltas = [2.0 ** -i for i in range(0, 12)]
    best = Policy.deterministic(mountain, [0] * mountain.n_states)
    assert kappa_optimality_probe(mountain, best, deltas).classification == "bounded"
    uniform = Policy.uniform(mountain)
    assert kappa_optimality_probe(mountain, uniform, deltas).classification == "diverging"
    m = random_mdp(9)
    lim = limit_policy(m, random_prior(m, 9))
    assert kappa_optimality_probe(m, limit_policy(m, lim), deltas).classification in (
        "bounded", "diverging")


def test_own_limit_policy_is_bounded(mountain):
    best = Policy.deterministic(mountain, [0] * mountain.n_states)
    assert np.allclose(limit_policy(mountain, best).table[0, 0], [1, 0])
    probe = kappa_optimality_probe(mountain, best, [1.0, 0.1, 0.01, 0.001])
    assert probe.kappas[-1] <= 1e-12


def test_greedy_coherence(mountain, counter):
    best = Policy.deterministic(mountain, [0] * mountain.n_states)
    assert check_greedy_coherence(mountain, best)
    down_root = Policy.deterministic(mountain, [1, 0, 0, 0, 0, 0, 0])
    assert not check_greedy_coherence(mountain, down_root)
    with pytest.raises(PreconditionError):
        check_greedy_coherence(counter, Policy.deterministic(counter, [0, 0, 0]))
    with pytest.raises(PreconditionError):
        check_greedy_coherence(mountain, Policy.uniform(mountain))


def test_single_action_is_greedy():
    m = random_mdp(4, deterministic=True, max_actions=1)
    assert check_greedy_coherence(m, Policy.uniform(m))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_kappa_zero_iff_agreement(seed):
    m = random_mdp(seed)
    pi = random_prior(m, seed)
    kappa = incoherence(m, pi, Softmax(1.0))
    assert kappa >= 0
    fixed = iterate_coherence(m, pi, Softmax(1.0), m.horizon).final
    assert incoherence(m, fixed, Softmax(1.0)) <= 1e-10


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_fixpoint_bound(seed):
    m = random_mdp(seed)
    step = fixpoint_step(m, random_prior(m, seed), Softmax(1.0))
    assert step is not None and step <= m.horizon


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_boltzmann_step_equals_goal_conditioning_for_uniform_prior(seed):
    m = random_mdp(seed)
    u = Policy.uniform(m)
    soft = f_soft_policy(m, u, Softmax(1.0))
    post = goal_condition(m, u)
    rows = oracles.conditioned_policy(m, u.table)
    for (t, s), row in rows.items():
        np.testing.assert_allclose(soft.table[t, s], row, atol=1e-10)
        np.testing.assert_allclose(post.table[t, s], row, atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 0), min_size=2, max_size=5), st.floats(-10, 10))
def test_softmax_shift_invariant(scores, c):
    f = Softmax(0.7)
    np.testing.assert_allclose(f(scores), f(np.asarray(scores) + c), atol=1e-12)
