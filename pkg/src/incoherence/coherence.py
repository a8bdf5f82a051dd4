"""Selectors, f-soft policies, incoherence and iterated coherence.

A selector maps a vector of soft Q values to a distribution over actions. It is
applied along the last axis, so the same object works on a single score vector
or on a whole ``(T, S, A)`` table.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._logspace import tv_rows
from .mdp import Mdp, PreconditionError, is_deterministic
from .policy import (Policy, expected_return, occupancy, policy_tv,
                     success_probability, trajectory_kl)
from .reports import Report
from .soft_values import TIE_TOL, limit_policy, soft_values


class Softmax:
    """Boltzmann selector ``exp(x / delta)``, normalised.

    -inf scores get weight 0; a row of all -inf maps to the uniform distribution.
    """

    def __init__(self, delta: float = 1.0):
        if not delta > 0:
            raise ValueError(f"delta must be positive, got {delta}")
        self.delta = float(delta)

    def __call__(self, scores) -> np.ndarray:
        x = np.asarray(scores, dtype=float)
        top = x.max(axis=-1, keepdims=True)
        dead = ~np.isfinite(top)
        w = np.exp((x - np.where(dead, 0.0, top)) / self.delta)
        w = np.where(dead, 1.0, w)
        return w / w.sum(axis=-1, keepdims=True)

    def __repr__(self):
        return f"Softmax(delta={self.delta:g})"


class ArgmaxUniform:
    """Uniform over the maximisers (within ``tol``); all -inf maps to uniform."""

    def __init__(self, tol: float = TIE_TOL):
        self.tol = tol

    def __call__(self, scores) -> np.ndarray:
        x = np.asarray(scores, dtype=float)
        top = x.max(axis=-1, keepdims=True)
        hit = np.where(np.isfinite(top), x >= top - self.tol, True).astype(float)
        return hit / hit.sum(axis=-1, keepdims=True)

    def __repr__(self):
        return "ArgmaxUniform()"


def f_soft_policy(m: Mdp, pi: Policy, f) -> Policy:
    """Apply selector ``f`` to ``Q^pi`` at every ``(t, s)``."""
    return Policy(f(soft_values(m, pi).q))


def incoherence(m: Mdp, pi: Policy, f) -> float:
    """KL over trajectories between ``pi`` and its f-soft policy."""
    return trajectory_kl(m, pi, f_soft_policy(m, pi, f))


def boltzmann_incoherence(m: Mdp, pi: Policy, delta: float) -> float:
    return incoherence(m, pi, Softmax(delta))


# -- iteration traces ---------------------------------------------------------

@dataclass
class TraceEntry:
    k: int
    policy: Policy
    J: float
    success_prob: float
    kappa: float
    tv_step: float | None
    tv_to_limit: float
    extra: dict = field(default_factory=dict)


@dataclass
class IterationTrace:
    operator: str
    schedule: str
    entries: list[TraceEntry]
    kappa_selector: str = ""
    flags: list = field(default_factory=list)

    @property
    def policies(self) -> list[Policy]:
        return [e.policy for e in self.entries]

    @property
    def final(self) -> Policy:
        return self.entries[-1].policy

    def returns(self) -> np.ndarray:
        return np.array([e.J for e in self.entries])

    def successes(self) -> np.ndarray:
        return np.array([e.success_prob for e in self.entries])

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, k) -> TraceEntry:
        return self.entries[k]


def build_trace(m: Mdp, policies, operator: str, schedule: str = "",
                kappa_selector=None, extras=None, flags=None) -> IterationTrace:
    """Evaluate the per-iteration metrics for a finished policy sequence.

    ``tv_to_limit`` is measured against the limit policy of the final iterate.
    """
    selector = kappa_selector if kappa_selector is not None else Softmax(1.0)
    target = limit_policy(m, policies[-1])
    entries = []
    for k, pi in enumerate(policies):
        entries.append(TraceEntry(
            k=k, policy=pi,
            J=expected_return(m, pi),
            success_prob=success_probability(m, pi),
            kappa=incoherence(m, pi, selector),
            tv_step=None if k == 0 else policy_tv(m, pi, policies[k - 1]),
            tv_to_limit=policy_tv(m, pi, target),
            extra=(extras[k] if extras else {}),
        ))
    return IterationTrace(operator, schedule, entries, repr(selector), list(flags or []))


def coherence_sequence(m: Mdp, pi0: Policy, f, steps: int) -> list[Policy]:
    if steps < 0:
        raise ValueError("steps must be non-negative")
    seq = [pi0]
    for _ in range(steps):
        seq.append(f_soft_policy(m, seq[-1], f))
    return seq


def iterate_coherence(m: Mdp, pi0: Policy, f, steps: int) -> IterationTrace:
    """pi_{i+1} = f-soft policy of pi_i; the trace's kappa column is kappa_f."""
    return build_trace(m, coherence_sequence(m, pi0, f, steps), "coherence",
                       f"steps={steps}", kappa_selector=f)


def fixpoint_step(m: Mdp, pi0: Policy, f, max_steps: int | None = None,
                  tol: float = 1e-12) -> int | None:
    """First index i with pi_{i+1} equal to pi_i within ``tol`` (None if not reached)."""
    max_steps = m.horizon + 5 if max_steps is None else max_steps
    seq = coherence_sequence(m, pi0, f, max_steps + 1)
    for i in range(len(seq) - 1):
        if np.max(tv_rows(seq[i].table, seq[i + 1].table)) <= tol:
            return i
    return None


# -- property checks -----------------------------------------------------------

def check_order_respecting(f, trials: int = 1000, dim: int = 4, seed: int = 0,
                           tol: float = 1e-12) -> Report:
    """Sample score vectors and coordinate bumps; test the three ordering clauses."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    violations = []
    for trial in range(trials):
        x = rng.normal(scale=2.0, size=dim)
        fx = np.asarray(f(x))
        i = int(rng.integers(dim))
        bumped = x.copy()
        bumped[i] += abs(rng.normal()) + 1e-3
        fb = np.asarray(f(bumped))
        if fb[i] < fx[i] - tol:
            violations.append((trial, "own score raised but own mass fell"))
        others = np.delete(np.arange(dim), i)
        if np.any(fb[others] > fx[others] + tol):
            violations.append((trial, "own score raised but another mass rose"))
        hi, lo = np.meshgrid(np.arange(dim), np.arange(dim), indexing="ij")
        bad = (x[hi] >= x[lo]) & (fx[hi] < fx[lo] - tol)
        if np.any(bad):
            violations.append((trial, "higher score received lower mass"))
    report = Report(f"order-respecting check of {f!r}",
                    data={"violations": violations[:20], "trials": trials, "dim": dim})
    report.expect_at_most("violations", len(violations), 0, f"{trials} trials, dim {dim}")
    return report


@dataclass
class KappaProbe:
    deltas: list[float]
    kappas: list[float]
    classification: str  # "bounded", "diverging" or "inconclusive"


def kappa_optimality_probe(m: Mdp, pi: Policy, delta_schedule, ceiling: float = 1e6,
                           cauchy_tol: float = 1e-6) -> KappaProbe:
    """Track kappa_delta as delta shrinks.

    ``diverging``: some value exceeds ``ceiling`` (or is infinite).
    ``bounded``: every value is finite and the last two differ by at most
    ``cauchy_tol``.
    """
    deltas = [float(d) for d in delta_schedule]
    if not deltas:
        raise ValueError("delta schedule must be non-empty")
    kappas = [boltzmann_incoherence(m, pi, d) for d in deltas]
    if any(not k <= ceiling for k in kappas):
        label = "diverging"
    elif len(kappas) == 1 or abs(kappas[-1] - kappas[-2]) <= cauchy_tol:
        label = "bounded"
    else:
        label = "inconclusive"
    return KappaProbe(deltas, kappas, label)


def check_greedy_coherence(m: Mdp, pi: Policy, tol: float = TIE_TOL) -> bool:
    """True iff pi's action attains max Q^pi at every positive-occupancy (t, s)."""
    if not is_deterministic(m):
        raise PreconditionError("greedy-coherence equivalence needs deterministic dynamics")
    if not pi.is_deterministic():
        raise PreconditionError("greedy-coherence check needs a deterministic policy")
    q = soft_values(m, pi).q
    d = occupancy(m, pi)[:-1]
    chosen = pi.table.argmax(axis=-1)
    for t, s in zip(*np.nonzero(d > 0)):
        if q[t, s, chosen[t, s]] < q[t, s].max() - tol:
            return False
    return True
