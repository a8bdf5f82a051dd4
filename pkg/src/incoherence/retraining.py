"""Retraining dynamics: the control-as-inference operator G, the temperature
family, and the two posterior-folding sequences F and H, plus their verifiers.

Folded rewards are time-indexed ``(T, S, A)`` tables. The fold term added at
each step is ``log(pi / prior)`` (zero where the prior is zero). For a uniform
prior this differs from ``log pi`` by a constant, which leaves every
posterior unchanged; for other priors it is the form under which the
equivalences hold. Each fold is shifted by its per-timestep maximum so that
rewards stay non-positive. A per-timestep constant is shared by every
trajectory and therefore does not move any posterior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._logspace import safe_log
from .coherence import Softmax, build_trace, IterationTrace, incoherence
from .mdp import Mdp, PreconditionError, is_deterministic
from .policy import Policy, causal_entropy, expected_return, occupancy, trajectory_kl
from .reports import Report
from .soft_values import limit_policy, posterior, step_tables

EQUIV_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class FoldedState:
    step_reward: np.ndarray  # (T, S, A)
    terminal_reward: np.ndarray  # (S,)
    policy: Policy
    shift: np.ndarray  # (T,) constant removed from each timestep's fold term


def _condition(m: Mdp, step_reward, prior: Policy):
    table, zero = posterior(step_reward, m.terminal_reward, m.transition, prior.table)
    return Policy(table), zero


def goal_condition(m: Mdp, prior: Policy) -> Policy:
    """``prior * exp(Q - V)`` row by row; zero-success rows keep the prior."""
    return _condition(m, step_tables(m), prior)[0]


def zero_success_rows(m: Mdp, prior: Policy) -> list[tuple[int, str]]:
    """``(t, state)`` rows where goal conditioning fell back to the prior."""
    _, zero = _condition(m, step_tables(m), prior)
    return [(int(t), m.states[s]) for t, s in zip(*np.nonzero(zero))]


def _zero_flags(m: Mdp, policies) -> list[str]:
    # Only reachable fallback rows are worth surfacing.
    flags = set()
    for pi in policies:
        _, zero = _condition(m, step_tables(m), pi)
        reach = occupancy(m, pi)[:-1] > 0
        for t, s in zip(*np.nonzero(zero & reach)):
            flags.add(f"zero-success fallback at t={t} state={m.states[s]}")
    return sorted(flags)


def g_sequence(m: Mdp, prior: Policy, k: int) -> list[Policy]:
    if k < 0:
        raise ValueError("k must be non-negative")
    seq = [prior]
    for _ in range(k):
        seq.append(goal_condition(m, seq[-1]))
    return seq


def iterate_G(m: Mdp, prior: Policy, k: int, delta: float = 1.0) -> IterationTrace:
    seq = g_sequence(m, prior, k)
    return build_trace(m, seq, "G", f"k={k}", Softmax(delta), flags=_zero_flags(m, seq))


def temperature_policy(m: Mdp, prior: Policy, alpha: float) -> Policy:
    """Goal conditioning under rewards multiplied by ``alpha``; the prior is kept."""
    return goal_condition(m.scaled(alpha), prior)


def temperature_schedule(kind: str, k: int, values=None) -> list[float]:
    """Inverse temperatures for indices ``1..k``: pow2, linear or an explicit list."""
    if kind == "pow2":
        return [2.0 ** i for i in range(1, k + 1)]
    if kind == "linear":
        return [float(i) for i in range(1, k + 1)]
    if kind == "explicit":
        values = [float(v) for v in (values or [])]
        if len(values) < k:
            raise ValueError(f"explicit schedule lists {len(values)} values, need {k}")
        return values[:k]
    raise ValueError(f"unknown schedule {kind!r}")


def iterate_temperature(m: Mdp, prior: Policy, k: int, schedule: str = "pow2",
                        values=None, delta: float = 1.0) -> IterationTrace:
    """Trace ``prior, pi_{alpha_1}, .., pi_{alpha_k}``."""
    alphas = temperature_schedule(schedule, k, values)
    seq = [prior] + [temperature_policy(m, prior, a) for a in alphas]
    extras = [{}] + [{"alpha": a} for a in alphas]
    return build_trace(m, seq, "temp", schedule, Softmax(delta), extras=extras)


def _fold(prior: Policy, pi: Policy):
    with np.errstate(invalid="ignore"):
        term = np.where(prior.table > 0, safe_log(pi.table) - safe_log(prior.table), 0.0)
    shift = term.max(axis=(1, 2))
    return term - shift[:, None, None], shift


def _folded_states(m: Mdp, prior: Policy, k: int, cumulative: bool) -> list[FoldedState]:
    if k < 0:
        raise ValueError("k must be non-negative")
    r0 = np.array(step_tables(m))
    zero_shift = np.zeros(m.horizon)
    states = [FoldedState(r0, m.terminal_reward, prior, zero_shift)]
    if k == 0:
        return states
    if cumulative:
        # r_{j+1} = r_j + log(post_j / p), pi^H_j = post_j for j >= 1
        post, _ = _condition(m, r0, prior)
        reward = r0
        for _ in range(k):
            term, shift = _fold(prior, post)
            reward = reward + term
            post, _ = _condition(m, reward, prior)
            states.append(FoldedState(reward, m.terminal_reward, post, shift))
    else:
        # pi^F_{j+1} = condition(r_j); r_{j+1} = r_0 + log(pi^F_{j+1} / p)
        reward, shift = r0, zero_shift
        for _ in range(k):
            pi, _ = _condition(m, reward, prior)
            states.append(FoldedState(reward, m.terminal_reward, pi, shift))
            term, shift = _fold(prior, pi)
            reward = r0 + term
    return states


def _folded_trace(m, prior, k, cumulative, delta):
    states = _folded_states(m, prior, k, cumulative)
    extras = [{"folded": s} for s in states]
    name = "H" if cumulative else "F"
    return build_trace(m, [s.policy for s in states], name, f"k={k}", Softmax(delta),
                       extras=extras)


def folded_sequence(m: Mdp, prior: Policy, k: int, delta: float = 1.0) -> IterationTrace:
    """F: every step conditions the original prior under ``r_0`` plus one fold term."""
    return _folded_trace(m, prior, k, False, delta)


def cumulative_folded_sequence(m: Mdp, prior: Policy, k: int,
                               delta: float = 1.0) -> IterationTrace:
    """H: fold terms accumulate, so the index ``k`` iterate sits at ``alpha = 2**k``."""
    return _folded_trace(m, prior, k, True, delta)


def f_policies(m, prior, k):
    return [s.policy for s in _folded_states(m, prior, k, False)]


def h_policies(m, prior, k):
    return [s.policy for s in _folded_states(m, prior, k, True)]


# -- verifiers -----------------------------------------------------------------

def _tv(m: Mdp, pi: Policy, rho: Policy) -> float:
    """Max row TV over positive-occupancy rows of ``pi``.

    Rows that no trajectory reaches carry no trajectory mass, and there the
    fallback rule for zero-success rows may legitimately differ between
    constructions.
    """
    reach = occupancy(m, pi)[:-1] > 0
    gaps = 0.5 * np.abs(pi.table - rho.table).sum(axis=-1)
    return float(np.max(np.where(reach, gaps, 0.0), initial=0.0))


def check_equivalence(m: Mdp, prior: Policy, k_max: int,
                      tolerance: float = EQUIV_TOL) -> Report:
    """The equivalence identities between G, F, H and the temperature family.

    Deterministic dynamics: F_k = G_k = pi_{alpha=k} for k <= k_max, and
    H_k = pi_{alpha=2^k} = G_{2^k} = F_{2^k}. Stochastic dynamics: only
    F_k = G_k is asserted; gaps to the temperature family are measured.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    deterministic = is_deterministic(m)
    report = Report(f"equivalence ({'deterministic' if deterministic else 'stochastic'}"
                    f" dynamics, k_max={k_max})")
    top = 2 ** k_max if deterministic else k_max
    g = g_sequence(m, prior, top)
    f = f_policies(m, prior, top)
    for k in range(1, k_max + 1):
        report.expect_at_most(f"TV(F_{k}, G_{k})", _tv(m, f[k], g[k]), tolerance)
    temp = {}
    for k in range(1, k_max + 1):
        temp[k] = temperature_policy(m, prior, k)
        gap = _tv(m, f[k], temp[k])
        if deterministic:
            report.expect_at_most(f"TV(F_{k}, pi_alpha={k})", gap, tolerance)
        else:
            report.notes.append(f"TV(F_{k}, pi_alpha={k}) = {gap:.12g} (measured, not asserted)")
    if deterministic:
        h = h_policies(m, prior, k_max)
        for k in range(1, k_max + 1):
            a = 2 ** k
            pa = temperature_policy(m, prior, a)
            report.expect_at_most(f"TV(H_{k}, pi_alpha={a})", _tv(m, h[k], pa), tolerance)
            report.expect_at_most(f"TV(H_{k}, G_{a})", _tv(m, h[k], g[a]), tolerance)
            report.expect_at_most(f"TV(F_{a}, G_{a})", _tv(m, f[a], g[a]), tolerance)
    report.data.update(G=g, F=f, temperature=temp, deterministic=deterministic)
    return report


def check_strict_temperature(m: Mdp, prior: Policy, k_max: int = 2,
                             tolerance: float = EQUIV_TOL) -> Report:
    """Assert F_k = pi_{alpha=k} regardless of the dynamics.

    This holds for deterministic dynamics and is expected to fail on stochastic
    ones, where the fold tracks G instead. The alternative pairing of F_1
    with alpha = 2 is reported alongside.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    f = f_policies(m, prior, max(k_max, 2))
    report = Report(f"strict temperature equivalence (k_max={k_max})")
    temp = {k: temperature_policy(m, prior, k) for k in range(1, max(k_max, 2) + 1)}
    for k in range(1, k_max + 1):
        report.expect_at_most(f"TV(F_{k}, pi_alpha={k})", _tv(m, f[k], temp[k]), tolerance)
    report.notes.append(f"TV(F_1, pi_alpha=2) = {_tv(m, f[1], temp[2]):.12g}")
    report.notes.append(f"TV(F_1, F_2) = {_tv(m, f[1], f[2]):.12g}")
    report.data.update(F=f, temperature=temp)
    return report


def improvement_audit(m: Mdp, prior: Policy, k: int, slack: float = 1e-10) -> Report:
    """Monotonicity of J and of the success probability along G."""
    if k < 1:
        raise ValueError("k must be >= 1")
    trace = iterate_G(m, prior, k)
    J = trace.returns()
    P = trace.successes()
    report = Report(f"return improvement along G (k={k})",
                    data={"J": J, "success": P, "flags": trace.flags})

    def worst_drop(seq):
        finite = np.isfinite(seq[:-1]) | np.isfinite(seq[1:])
        with np.errstate(invalid="ignore"):
            drops = np.where(finite, seq[:-1] - seq[1:], 0.0)
        # -inf after a finite value is an infinite drop
        drops = np.where(np.isnan(drops), np.inf, drops)
        return float(drops.max(initial=0.0))

    report.expect_at_most("max J(G_i) - J(G_{i+1})", worst_drop(J), slack)
    report.expect_at_most("max P(G_i) - P(G_{i+1})", worst_drop(P), slack)
    strict = int(np.sum(J[1:] > J[:-1]))
    report.notes.append(f"strict increases in J: {strict}/{k}")
    report.notes += trace.flags
    return report


def convergence_probe(m: Mdp, prior: Policy, k: int = 32, delta: float = 1 / 32,
                      tv_threshold: float = 1e-3, kappa_threshold: float = 1e-2) -> Report:
    """Distance of G_k to the greedy limit of its own Q, and its Boltzmann incoherence."""
    report = Report(f"convergence of G (k={k}, delta={delta:g})")
    full = bool(np.all(prior.table > 0))
    report.expect("full-support precondition", full,
                  detail="" if full else "full-support precondition violated")
    pk = g_sequence(m, prior, k)[-1]
    tv = _tv(m, pk, limit_policy(m, pk))
    kappa = incoherence(m, pk, Softmax(delta))
    report.expect_at_most(f"TV(G_{k}, limit policy)", tv, tv_threshold)
    report.expect_at_most(f"kappa_delta(G_{k})", kappa, kappa_threshold)
    report.data.update(policy=pk, tv=tv, kappa=kappa, full_support=full)
    return report


# -- improvement rate --------------------------------------------------------------

def _regulariser(m: Mdp, prior: Policy, pi: Policy, uniform: bool) -> float:
    # Causal entropy; for a non-uniform prior the matching regulariser is -KL to it.
    return causal_entropy(m, pi) if uniform else -trajectory_kl(m, pi, prior)


def _x_derivatives(fun, alpha: float, h: float):
    """d/dx and d2/dx2 at x = 1/alpha from central differences in alpha."""
    f0, fp, fm = fun(alpha), fun(alpha + h), fun(alpha - h)
    d1 = (fp - fm) / (2 * h)
    d2 = (fp - 2 * f0 + fm) / h ** 2
    return -alpha ** 2 * d1, alpha ** 4 * d2 + 2 * alpha ** 3 * d1, d1, d2


def rate_check(m: Mdp, prior: Policy, k: int, h: float = 1e-3, band=(0.5, 2.0),
               trend_from: int = 8, richardson_rtol: float = 1e-4) -> Report:
    """Actual one-step return gains along G against the leading-order prediction.

    Along the temperature family, x = 1/alpha, and G_j = pi_{alpha=j}. The
    gain ``J(G_j) - J(G_{j-1})`` is predicted by ``eta * J' H' / (J'' + x H'')``
    at ``x = 1/j``, ``eta = 1/(j(j-1))``, derivatives taken in x. That
    quotient is the first-order Taylor term ``-eta * dJ/dx``.
    """
    if not is_deterministic(m):
        raise PreconditionError("the rate prediction only covers deterministic dynamics")
    if k < 4:
        raise ValueError("k must be >= 4")
    if not h > 0:
        raise ValueError("h must be positive")
    uniform = bool(np.allclose(prior.table, 1.0 / m.n_actions, rtol=0, atol=1e-15))

    cache: dict[float, tuple[float, float]] = {}

    def evaluate(alpha):
        if alpha not in cache:
            pi = temperature_policy(m, prior, alpha)
            cache[alpha] = (expected_return(m, pi), _regulariser(m, prior, pi, uniform))
        return cache[alpha]

    J = lambda a: evaluate(a)[0]  # noqa: E731
    H = lambda a: evaluate(a)[1]  # noqa: E731

    g = g_sequence(m, prior, k)
    returns = [expected_return(m, pi) for pi in g]
    rows = []
    unstable = []
    for j in range(2, k + 1):
        x, eta = 1.0 / j, 1.0 / (j * (j - 1))
        Jx1, Jx2, Ja1, Ja2 = _x_derivatives(J, j, h)
        Hx1, Hx2, Ha1, Ha2 = _x_derivatives(H, j, h)
        # Richardson consistency of the second differences at h and h/2
        _, Jx2h, _, _ = _x_derivatives(J, j, h / 2)
        _, Hx2h, _, _ = _x_derivatives(H, j, h / 2)
        for name, a, b in (("J''", Jx2, Jx2h), ("H''", Hx2, Hx2h)):
            scale = max(abs(a), abs(b))
            if scale > 1e-12 and abs(a - b) > richardson_rtol * scale:
                unstable.append(f"{name} at alpha={j}: {a:.6g} (h) vs {b:.6g} (h/2)")
        num, den = Jx1 * Hx1, Jx2 + x * Hx2
        predicted = 0.0 if num == 0 else eta * num / den
        literal_den = Ja2 + x * Ha2
        literal = 0.0 if Ja1 * Ha1 == 0 else x * Ja1 * Ha1 / literal_den
        actual = returns[j] - returns[j - 1]
        if abs(predicted) < 1e-15 and abs(actual) < 1e-15:
            ratio = 1.0  # degenerate: both sides vanish
        elif predicted == 0 or not np.isfinite(actual):
            ratio = float("nan")
        else:
            ratio = actual / predicted
        rows.append({"k": j, "actual": actual, "predicted": predicted, "ratio": ratio,
                     "literal_prediction": literal,
                     "literal_ratio": actual / literal if literal else float("nan")})

    report = Report(f"return improvement rate (k={k}, h={h:g})",
                    data={"rows": rows, "unstable": unstable})
    infinite = [r["k"] for r in rows if not np.isfinite(r["actual"])]
    report.expect("J finite along the sequence", not infinite, measured=len(infinite),
                  detail=f"non-finite at k={infinite[:5]}" if infinite else "")
    report.expect("finite-difference derivatives stable (h vs h/2)", not unstable,
                  measured=len(unstable),
                  detail="; ".join(unstable[:3]) if unstable else "")
    lo, hi = band
    window = [r for r in rows if r["k"] >= trend_from]
    for r in window:
        report.expect(f"ratio at k={r['k']} in [{lo:g}, {hi:g}]",
                      bool(lo <= r["ratio"] <= hi), measured=r["ratio"])
    dist = [abs(r["ratio"] - 1.0) for r in window]
    nonincreasing = all(b <= a + 1e-12 for a, b in zip(dist, dist[1:]))
    report.expect("|ratio - 1| non-increasing in k", nonincreasing,
                  measured=dist[-1] if dist else 0.0,
                  detail=", ".join(f"{d:.4f}" for d in dist))
    for r in rows:
        report.notes.append(
            f"k={r['k']}: actual={r['actual']:.6g} predicted={r['predicted']:.6g} "
            f"ratio={r['ratio']:.6g} literal_ratio={r['literal_ratio']:.6g}")
    return report
