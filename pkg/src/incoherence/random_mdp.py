"""Seeded random MDPs and priors for the property suites.

Sizes stay at |S| <= 6, |A| <= 3, T <= 4 so that exhaustive enumeration is
cheap. Rewards mix exact zeros, moderate log-probabilities and occasional
-inf entries so the zero-success code paths are exercised.
"""

from __future__ import annotations

import numpy as np

from .mdp import Mdp
from .policy import Policy


def random_mdp(seed: int, deterministic: bool = False, layered: bool = False,
               max_states: int = 6, max_actions: int = 3, max_horizon: int = 4) -> Mdp:
    """Draw an MDP from ``numpy.random.default_rng(seed)``.

    ``layered=True`` splits the states into per-timestep layers (a time-indexed
    tree-like graph); the default is a general sparse graph where states recur.
    """
    rng = np.random.default_rng(seed)
    horizon = int(rng.integers(1, max_horizon + 1))
    n_actions = int(rng.integers(1, max_actions + 1))
    if layered:
        n_states = int(rng.integers(horizon + 1, max(max_states, horizon + 1) + 1))
    else:
        n_states = int(rng.integers(2, max_states + 1))

    if layered:
        # layer of each state: first the start layer, the rest spread over 1..T
        layer = np.concatenate([[0], np.arange(1, horizon + 1),
                                rng.integers(1, horizon + 1, n_states - horizon - 1)])
        layer = np.sort(layer)
    transition = np.zeros((n_states, n_actions, n_states))
    for s in range(n_states):
        for a in range(n_actions):
            if layered:
                nxt = np.flatnonzero(layer == min(layer[s] + 1, horizon))
            else:
                nxt = np.arange(n_states)
            width = 1 if deterministic else int(rng.integers(1, min(3, len(nxt)) + 1))
            support = rng.choice(nxt, size=width, replace=False)
            transition[s, a, support] = rng.dirichlet(np.ones(width)) if width > 1 else 1.0

    step = np.where(rng.random((n_states, n_actions)) < 0.5, 0.0,
                    np.log(rng.uniform(0.2, 1.0, (n_states, n_actions))))
    step[rng.random((n_states, n_actions)) < 0.05] = -np.inf
    terminal = np.log(rng.uniform(0.05, 1.0, n_states))
    terminal[rng.random(n_states) < 0.1] = -np.inf

    if layered:
        initial = np.zeros(n_states)
        initial[0] = 1.0
    else:
        initial = np.zeros(n_states)
        starts = rng.choice(n_states, size=int(rng.integers(1, 3)), replace=False)
        initial[starts] = rng.dirichlet(np.ones(len(starts))) if len(starts) > 1 else 1.0

    kind = "det" if deterministic else "stoch"
    return Mdp(states=tuple(f"s{i}" for i in range(n_states)),
               actions=tuple(f"a{i}" for i in range(n_actions)),
               horizon=horizon, transition=transition, initial=initial,
               step_reward=step, terminal_reward=terminal,
               name=f"random-{kind}-{seed}")


def random_prior(m: Mdp, seed: int, full_support: bool = True) -> Policy:
    """Dirichlet rows; with ``full_support=False`` some actions get probability 0."""
    rng = np.random.default_rng(seed)
    table = rng.dirichlet(np.ones(m.n_actions), size=(m.horizon, m.n_states))
    if not full_support and m.n_actions > 1:
        keep = rng.random(table.shape) >= 0.3
        keep[~keep.any(axis=-1), 0] = True
        table = np.where(keep, table, 0.0)
        table = table / table.sum(axis=-1, keepdims=True)
    return Policy(table)


def random_suite(count: int, seed: int, deterministic: bool = False, **kwargs):
    """``count`` MDPs drawn with seeds ``seed, seed + 1, ..``."""
    return [random_mdp(seed + i, deterministic=deterministic, **kwargs) for i in range(count)]
