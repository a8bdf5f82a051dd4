"""Policy-parametrised soft Q/V backward recursion and its brute-force oracles.

``exp Q[t, s, a]`` is the probability that every remaining optimality variable
is 1 after taking ``a`` in ``s`` at time ``t`` and following the policy
afterwards; ``exp V`` is the same with the action drawn from the policy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._logspace import log_expect
from .mdp import (DEFAULT_ENUMERATION_CAP, Mdp, PreconditionError, _check_cap,
                  is_deterministic, trajectory_arrays, trajectory_log_rewards)
from .policy import Policy, occupancy, trajectory_probabilities
from .reports import Report

TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SoftValues:
    q: np.ndarray  # (T, S, A)
    v: np.ndarray  # (T + 1, S); v[T] is the terminal reward

    def q_row(self, m: Mdp, t: int, state: str) -> np.ndarray:
        return self.q[t, m.state_index(state)]


def step_tables(m: Mdp) -> np.ndarray:
    """Stationary step rewards broadcast to a ``(T, S, A)`` table."""
    return np.broadcast_to(m.step_reward, (m.horizon, m.n_states, m.n_actions))


def backward(step_reward, terminal_reward, transition, table) -> SoftValues:
    """Soft Q/V for time-indexed rewards ``step_reward[t, s, a]``."""
    T = table.shape[0]
    v = np.empty((T + 1, transition.shape[0]))
    q = np.empty(table.shape)
    v[T] = terminal_reward
    for t in range(T - 1, -1, -1):
        q[t] = step_reward[t] + log_expect(v[t + 1][None, None, :], transition)
        v[t] = log_expect(q[t], table[t])
    q.setflags(write=False)
    v.setflags(write=False)
    return SoftValues(q=q, v=v)


def soft_values(m: Mdp, pi: Policy) -> SoftValues:
    return backward(step_tables(m), m.terminal_reward, m.transition, pi.table)


def posterior(step_reward, terminal_reward, transition, prior_table):
    """Condition a prior on future optimality: ``prior * exp(Q - V)`` per row.

    Returns ``(table, zero_mask)``. Rows where success is impossible
    (``V = -inf``) keep the prior and are marked in ``zero_mask``.
    """
    sv = backward(step_reward, terminal_reward, transition, prior_table)
    v = sv.v[:-1, :, None]
    zero = ~np.isfinite(sv.v[:-1])
    ratio = np.exp(sv.q - np.where(np.isfinite(v), v, 0.0))
    post = np.where(prior_table > 0, prior_table * ratio, 0.0)
    post = np.where(zero[..., None], prior_table, post)
    post = post / post.sum(axis=-1, keepdims=True)
    return post, zero


def limit_policy(m: Mdp, pi: Policy, tol: float = TIE_TOL) -> Policy:
    """Uniform over the actions maximising ``Q^pi`` at every ``(t, s)``.

    Rows whose Q values are all -inf become uniform over every action.
    """
    q = soft_values(m, pi).q
    best = q.max(axis=-1, keepdims=True)
    finite = np.isfinite(best)
    chosen = np.where(finite, q >= best - tol, True).astype(float)
    return Policy(chosen / chosen.sum(axis=-1, keepdims=True))


# -- oracles -----------------------------------------------------------------

def _suffix_success(m: Mdp, pi: Policy, t: int, s: int, a: int) -> float:
    """p_pi(O_{t:T} = 1 | s_t = s, a_t = a) by listing every suffix path."""
    # (probability, log-reward so far, state, action taken there)
    paths = [(1.0, m.step_reward[s, a], s, a)]
    for u in range(t, m.horizon):
        grown = []
        for prob, reward, state, action in paths:
            for nxt in np.flatnonzero(m.transition[state, action] > 0):
                p_move = prob * m.transition[state, action, nxt]
                if u + 1 == m.horizon:
                    grown.append((p_move, reward + m.terminal_reward[nxt], nxt, -1))
                    continue
                for b in np.flatnonzero(pi.table[u + 1, nxt] > 0):
                    grown.append((p_move * pi.table[u + 1, nxt, b],
                                  reward + m.step_reward[nxt, b], nxt, b))
        paths = grown
    return float(sum(prob * np.exp(reward) for prob, reward, _, _ in paths))


def oracle_check_qv(m: Mdp, pi: Policy, tolerance: float = 1e-9,
                    cap: int = DEFAULT_ENUMERATION_CAP) -> Report:
    """Compare ``exp Q`` with suffix-enumerated success probabilities.

    Every action at every ``(t, s)`` with positive occupancy under ``pi`` is
    checked; unreachable states are skipped.
    """
    _check_cap(m, cap)
    q = soft_values(m, pi).q
    d = occupancy(m, pi)
    gaps = []
    for t in range(m.horizon):
        for s in np.flatnonzero(d[t] > 0):
            for a in range(m.n_actions):
                exact = _suffix_success(m, pi, t, int(s), a)
                gaps.append((abs(np.exp(q[t, s, a]) - exact), t, m.states[s], m.actions[a]))
    gaps.sort(key=lambda g: -g[0])
    report = Report("soft Q characterisation", data={"checked": len(gaps), "worst": gaps[:5]})
    report.expect_at_most("max |exp Q - enumerated success|",
                          gaps[0][0] if gaps else 0.0, tolerance,
                          f"{len(gaps)} (t, s, a) triples")
    return report


def check_deterministic_factorization(m: Mdp, p: Policy, tolerance: float = 1e-9,
                                      cap: int = DEFAULT_ENUMERATION_CAP) -> Report:
    """Globally conditioned trajectory law versus the product of local posteriors.

    The local product also conditions the initial state,
    ``p(s_0 | O) ~ mu(s_0) exp V(s_0)``, so that both sides are distributions.
    """
    if not is_deterministic(m):
        raise PreconditionError("factorisation only holds for deterministic dynamics")
    states, actions, _ = trajectory_arrays(m, cap)
    prior = trajectory_probabilities(m, p, cap)
    joint = prior * np.exp(trajectory_log_rewards(m, cap))
    total = joint.sum()
    if total <= 0:
        raise PreconditionError("success has probability zero; the posterior is undefined")
    global_post = joint / total

    post_table, _ = posterior(step_tables(m), m.terminal_reward, m.transition, p.table)
    v0 = soft_values(m, p).v[0]
    with np.errstate(divide="ignore"):
        start = m.initial * np.exp(v0)
    start = start / start.sum()
    local = start[states[:, 0]]
    for t in range(m.horizon):
        local = local * post_table[t, states[:, t], actions[:, t]]

    gap = np.abs(global_post - local)
    report = Report("deterministic factorisation",
                    data={"global": global_post, "local": local})
    report.expect_at_most("max |p(xi | O) - prod of local posteriors|",
                          gap.max(initial=0.0), tolerance, f"{len(gap)} trajectories")
    return report


def log_success(m: Mdp, pi: Policy) -> float:
    """log p_pi(O = 1) from the recursion, averaged over the initial distribution."""
    v0 = soft_values(m, pi).v[0]
    return float(log_expect(v0, m.initial))

