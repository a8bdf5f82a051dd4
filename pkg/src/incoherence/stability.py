"""n-policy-stability of control-as-inference preferences.

For a state ``s`` at time ``t`` and a first action ``a``, ``M_n(a)`` is the
largest success probability reachable by appending ``n`` further actions
(chosen open-loop by exhaustive search) and then following the prior.
``M_0(a)`` is ``exp Q^prior(s, a)``. The prior-derived policy is n-stable when
``M_n(a1) > M_n(a2)`` implies ``M_0(a1) > M_0(a2)`` for every reachable state
and pair of first actions. Ties on either side never count as violations.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .mdp import Mdp, PreconditionError, builtin_example
from .policy import Policy, occupancy
from .reports import Report, fmt
from .soft_values import soft_values

STRICT_TOL = 1e-12


@dataclass(frozen=True)
class Comparison:
    t: int
    state: str
    first: tuple[str, str]
    continuations: tuple[tuple[tuple[str, ...], ...], tuple[tuple[str, ...], ...]]
    lookahead_mass: tuple[float, float]
    immediate_mass: tuple[float, float]

    @property
    def violated(self) -> bool:
        (l1, l2), (i1, i2) = self.lookahead_mass, self.immediate_mass
        return l1 > l2 + STRICT_TOL and not i1 > i2 + STRICT_TOL

    def describe(self) -> str:
        a1, a2 = self.first
        c1, c2 = (" | ".join(",".join(c) or "-" for c in cs) for cs in self.continuations)
        return (f"t={self.t} {self.state}: ({a1}; {c1}) mass {fmt(self.lookahead_mass[0])} vs "
                f"({a2}; {c2}) mass {fmt(self.lookahead_mass[1])}; immediate "
                f"{fmt(self.immediate_mass[0])} vs {fmt(self.immediate_mass[1])}")


@dataclass
class StabilityReport:
    n: int
    comparisons: list[Comparison]
    witnesses: list[Comparison] = field(default_factory=list)

    @property
    def verdict(self) -> str:
        return "unstable" if self.witnesses else "stable"

    def render(self) -> str:
        lines = [f"{self.n}-policy-stability: {self.verdict}"]
        lines += [f"  witness: {w.describe()}" for w in self.witnesses]
        return "\n".join(lines)


def _window_mass(m: Mdp, v, t: int, s: int, seq) -> float:
    """Success probability of playing ``seq`` from ``(t, s)``, then the prior.

    ``v`` holds the prior's soft values; the tail after the window is ``exp v``.
    """
    weight = np.zeros(m.n_states)  # probability times exp(step rewards) so far
    weight[s] = 1.0
    for a in seq:
        with np.errstate(invalid="ignore"):
            gain = np.where(weight > 0, weight * np.exp(m.step_reward[:, a]), 0.0)
        weight = gain @ m.transition[:, a, :]
    end = t + len(seq)
    with np.errstate(invalid="ignore"):
        return float(np.sum(np.where(weight > 0, weight * np.exp(v[end]), 0.0)))


def enumerated_mass(m: Mdp, prior: Policy, t: int, state: str, seq) -> float:
    """Independent check of the window mass: lists every suffix path explicitly."""
    s0 = m.state_index(state)
    forced = [m.action_index(a) for a in seq]
    paths = [(1.0, 0.0, s0)]
    for u in range(t, m.horizon):
        grown = []
        for prob, reward, s in paths:
            k = u - t
            choices = ([(forced[k], 1.0)] if k < len(forced)
                       else [(b, prior.table[u, s, b]) for b in range(m.n_actions)
                             if prior.table[u, s, b] > 0])
            for b, pb in choices:
                for nxt in np.flatnonzero(m.transition[s, b] > 0):
                    grown.append((prob * pb * m.transition[s, b, nxt],
                                  reward + m.step_reward[s, b], int(nxt)))
        paths = grown
    return float(sum(p * np.exp(r + m.terminal_reward[s]) for p, r, s in paths))


def n_policy_stable(m: Mdp, prior: Policy, n: int) -> StabilityReport:
    """Check the n-step implication at every reachable ``(t, s)`` with room for n more actions."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    if n > m.horizon - 1:
        first = m.states[int(np.flatnonzero(m.initial > 0)[0])]
        raise PreconditionError(
            f"lookahead n={n} exceeds the remaining horizon {m.horizon - 1} at t=0 state={first}")
    sv = soft_values(m, prior)
    reach = occupancy(m, prior)[:-1] > 0
    comparisons, witnesses = [], []
    for t in range(m.horizon - n):
        for s in np.flatnonzero(reach[t]):
            best = {}
            for a in range(m.n_actions):
                scored = [(_window_mass(m, sv.v, t, s, (a, *c)), c)
                          for c in itertools.product(range(m.n_actions), repeat=n)]
                top = max(score for score, _ in scored)
                arg = tuple(tuple(m.actions[b] for b in c) for score, c in scored
                            if score >= top - STRICT_TOL)
                best[a] = (top, arg)
            immediate = np.exp(sv.q[t, s])
            for a1, a2 in itertools.permutations(range(m.n_actions), 2):
                c = Comparison(t, m.states[s], (m.actions[a1], m.actions[a2]),
                               (best[a1][1], best[a2][1]), (best[a1][0], best[a2][0]),
                               (float(immediate[a1]), float(immediate[a2])))
                comparisons.append(c)
                if c.violated:
                    witnesses.append(c)
    return StabilityReport(n, comparisons, witnesses)


def root_requirement(report: StabilityReport, m: Mdp) -> int:
    """Sign of the root ordering demanded by the n-step preferences.

    +1 if the first action must be preferred, -1 if the second, 0 if none.
    """
    root = m.states[int(np.flatnonzero(m.initial > 0)[0])]
    for c in report.comparisons:
        if c.t == 0 and c.state == root and c.first == (m.actions[0], m.actions[1]):
            l1, l2 = c.lookahead_mass
            return int(np.sign(l1 - l2)) if abs(l1 - l2) > STRICT_TOL else 0
    return 0


def stability_conflict_demo(m: Mdp | None = None, prior: Policy | None = None) -> Report:
    """Compare the root orderings required by 1- and 2-step lookahead.

    A conflict means the two lookahead depths demand strictly opposite
    orderings of the root actions, so no single policy is stable for both.
    """
    m = builtin_example("stability_tree") if m is None else m
    prior = Policy.uniform(m) if prior is None else prior
    r1, r2 = n_policy_stable(m, prior, 1), n_policy_stable(m, prior, 2)
    req1, req2 = root_requirement(r1, m), root_requirement(r2, m)
    conflict = req1 * req2 < 0

    report = Report(f"stability conflict on {m.name or 'mdp'}",
                    data={"reports": (r1, r2), "requirements": (req1, req2)})
    worst = 0.0
    for r in (r1, r2):
        for c in r.comparisons:
            for side in (0, 1):
                seq = (c.first[side], *c.continuations[side][0])
                worst = max(worst, abs(enumerated_mass(m, prior, c.t, c.state, seq)
                                       - c.lookahead_mass[side]))
    report.expect_at_most("witness masses vs enumeration", worst, 1e-12)
    names = {1: f"{m.actions[0]} over {m.actions[1]}", -1: f"{m.actions[1]} over {m.actions[0]}",
             0: "no strict ordering"}
    detail = f"n=1 requires {names[req1]}; n=2 requires {names[req2]}"
    report.expect("root-ordering requirements conflict", conflict, detail=detail)
    report.notes.append("conflict" if conflict else "no conflict")
    for r in (r1, r2):
        report.notes.append(r.render())
        root = [c for c in r.comparisons if c.t == 0]
        report.notes += [f"  n={r.n} root comparison: {c.describe()}" for c in root[:1]]
    return report
