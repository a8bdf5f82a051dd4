"""Time-indexed policies and the functionals evaluated on them.

All functionals are exact. The occupancy-based ones (return, trajectory KL,
causal entropy) use a forward recursion; the ``oracle_*`` and enumeration-based
ones sum over every trajectory and serve as independent cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._logspace import entropy_rows, kl_rows, safe_log, tv_rows, weighted_sum
from .mdp import (DEFAULT_ENUMERATION_CAP, Mdp, Trajectory, trajectory_arrays,
                  trajectory_log_rewards)

ROW_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Policy:
    """Action distributions ``table[t, s, a]`` for ``t = 0 .. T-1``."""

    table: np.ndarray

    def __post_init__(self):
        table = np.array(self.table, dtype=float)
        if table.ndim != 3:
            raise ValueError(f"policy table must be (T, S, A), got shape {table.shape}")
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    @property
    def horizon(self) -> int:
        return self.table.shape[0]

    @classmethod
    def uniform(cls, m: Mdp) -> "Policy":
        return cls(np.full((m.horizon, m.n_states, m.n_actions), 1.0 / m.n_actions))

    @classmethod
    def stationary(cls, m: Mdp, rows) -> "Policy":
        """Replicate an ``(S, A)`` table across every timestep."""
        rows = np.asarray(rows, dtype=float)
        return cls(np.broadcast_to(rows, (m.horizon, *rows.shape)).copy())

    @classmethod
    def deterministic(cls, m: Mdp, choice) -> "Policy":
        """Point masses; ``choice`` is ``(S,)`` stationary or ``(T, S)`` action indices."""
        choice = np.asarray(choice, dtype=int)
        if choice.ndim == 1:
            choice = np.broadcast_to(choice, (m.horizon, m.n_states))
        table = np.zeros((m.horizon, m.n_states, m.n_actions))
        t, s = np.indices(choice.shape)
        table[t, s, choice] = 1.0
        return cls(table)

    def with_rows(self, m: Mdp, rows: dict) -> "Policy":
        """Copy with some rows replaced.

        ``rows`` maps a state name (all timesteps) or a ``(t, state name)`` pair to
        a mapping of action name to probability, or to a sequence over actions.
        """
        table = self.table.copy()
        for key, row in rows.items():
            if isinstance(key, tuple):
                t, name = key
                ts = [t]
            else:
                name, ts = key, range(self.horizon)
            s = m.state_index(name)
            if isinstance(row, dict):
                vec = np.zeros(m.n_actions)
                for action, p in row.items():
                    vec[m.action_index(action)] = p
            else:
                vec = np.asarray(row, dtype=float)
            for t in ts:
                table[t, s] = vec
        return Policy(table)

    def row(self, m: Mdp, t: int, state: str) -> np.ndarray:
        return self.table[t, m.state_index(state)]

    def is_deterministic(self) -> bool:
        return bool(np.all(np.isclose(self.table.max(axis=-1), 1.0, rtol=0, atol=ROW_TOL)))


def validate_policy(m: Mdp, pi: Policy) -> list[str]:
    problems = []
    expected = (m.horizon, m.n_states, m.n_actions)
    if pi.table.shape != expected:
        return [f"policy shape {pi.table.shape} != {expected}"]
    if np.any(pi.table < 0) or not np.all(np.isfinite(pi.table)):
        problems.append("policy has negative or non-finite entries")
    sums = pi.table.sum(axis=-1)
    for t, s in zip(*np.nonzero(np.abs(sums - 1.0) > ROW_TOL)):
        problems.append(f"policy row t={t} state={m.states[s]} sums to {sums[t, s]!r}")
    return problems


def _check(m: Mdp, pi: Policy):
    expected = (m.horizon, m.n_states, m.n_actions)
    if pi.table.shape != expected:
        raise ValueError(f"policy shape {pi.table.shape} does not match MDP {expected}")


# -- enumeration-based functionals ------------------------------------------

def trajectory_probabilities(m: Mdp, pi: Policy, cap: int = DEFAULT_ENUMERATION_CAP
                             ) -> np.ndarray:
    """Probability of every enumerated trajectory (ordering of ``trajectory_arrays``)."""
    _check(m, pi)
    states, actions, prob = trajectory_arrays(m, cap)
    out = prob.copy()
    for t in range(m.horizon):
        out = out * pi.table[t, states[:, t], actions[:, t]]
    return out


def trajectory_distribution(m: Mdp, pi: Policy, cap: int = DEFAULT_ENUMERATION_CAP
                            ) -> dict[Trajectory, float]:
    states, actions, _ = trajectory_arrays(m, cap)
    probs = trajectory_probabilities(m, pi, cap)
    return {Trajectory(tuple(map(int, s)), tuple(map(int, a))): float(p)
            for s, a, p in zip(states, actions, probs)}


def success_probability(m: Mdp, pi: Policy, cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    """p_pi(all optimality variables = 1), summed over trajectories."""
    probs = trajectory_probabilities(m, pi, cap)
    return float(np.sum(probs * np.exp(trajectory_log_rewards(m, cap))))


def oracle_expected_return(m: Mdp, pi: Policy, cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    probs = trajectory_probabilities(m, pi, cap)
    return float(weighted_sum(probs, trajectory_log_rewards(m, cap)))


def oracle_trajectory_kl(m: Mdp, pi: Policy, rho: Policy,
                         cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    """KL between the trajectory distributions of ``pi`` and ``rho``, by enumeration."""
    p = trajectory_probabilities(m, pi, cap)
    q = trajectory_probabilities(m, rho, cap)
    return float(kl_rows(p, q))


# -- occupancy-based functionals --------------------------------------------

def occupancy(m: Mdp, pi: Policy) -> np.ndarray:
    """State occupancy ``d[t, s]`` for ``t = 0 .. T`` (row ``T`` is the final state)."""
    _check(m, pi)
    d = np.zeros((m.horizon + 1, m.n_states))
    d[0] = m.initial
    for t in range(m.horizon):
        d[t + 1] = np.einsum("s,sa,sax->x", d[t], pi.table[t], m.transition)
    return d


def expected_return(m: Mdp, pi: Policy) -> float:
    """J(pi): expected total log-reward; -inf if a reachable path has reward -inf."""
    d = occupancy(m, pi)
    step = weighted_sum(d[:-1, :, None] * pi.table, m.step_reward[None])
    return float(step + weighted_sum(d[-1], m.terminal_reward))


def trajectory_kl(m: Mdp, pi: Policy, rho: Policy) -> float:
    """KL over trajectories as the occupancy-weighted sum of per-state KLs."""
    _check(m, rho)
    d = occupancy(m, pi)[:-1]
    per_state = kl_rows(pi.table, rho.table)
    return float(weighted_sum(d, per_state))


def causal_entropy(m: Mdp, pi: Policy) -> float:
    d = occupancy(m, pi)[:-1]
    return float(weighted_sum(d, entropy_rows(pi.table)))


def policy_tv(m: Mdp, pi: Policy, rho: Policy, where: str = "all") -> float:
    """Largest per-state total-variation distance between two policies.

    ``where="all"`` scans every ``(t, s)``; ``where="reachable"`` only those
    with positive occupancy under either policy.
    """
    _check(m, pi)
    _check(m, rho)
    gaps = tv_rows(pi.table, rho.table)
    if where == "reachable":
        mask = (occupancy(m, pi)[:-1] > 0) | (occupancy(m, rho)[:-1] > 0)
        gaps = np.where(mask, gaps, 0.0)
    elif where != "all":
        raise ValueError(f"where must be 'all' or 'reachable', got {where!r}")
    return float(gaps.max()) if gaps.size else 0.0


def log_policy(pi: Policy) -> np.ndarray:
    return safe_log(pi.table)
