"""Command-line harness: ``incoherence {validate,iterate,verify,examples,stability}``.

Exit codes: 0 pass, 1 assertion failure, 2 usage or input error, 3 enumeration
cap exceeded. Reports go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .coherence import Softmax, iterate_coherence
from .mdp import (BUILTIN_NAMES, DEFAULT_ENUMERATION_CAP, EnumerationCapError, Mdp,
                  MdpError, PreconditionError, _check_cap, builtin_example, is_deterministic,
                  load_mdp, validate_mdp)
from .policy import (Policy, occupancy, oracle_trajectory_kl, trajectory_kl)
from .random_mdp import random_mdp, random_prior
from .reports import Report, fmt
from .retraining import (check_equivalence, check_strict_temperature, convergence_probe,
                         cumulative_folded_sequence, folded_sequence, g_sequence,
                         goal_condition, improvement_audit, iterate_G, iterate_temperature,
                         rate_check, temperature_policy)
from .soft_values import (check_deterministic_factorization, limit_policy, oracle_check_qv,
                          soft_values)
from .stability import n_policy_stable, stability_conflict_demo

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CAP = 0, 1, 2, 3
CSV_COLUMNS = ["k", "operator", "J", "success_prob", "kappa_delta", "tv_step", "tv_to_limit"]
OPERATORS = ("G", "F", "H", "temp", "coherence")
CHECKS = ("equivalence", "equivalence-strict-temp", "improvement", "qv", "factorization",
          "rate", "stability", "convergence", "kl")
EXAMPLE_TOL = 1e-9


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    mdp: str | None = "mountain_race"
    operator: str = "G"
    steps: int | None = None
    delta: float = 1.0
    schedule: str = "pow2"
    alphas: list[float] = field(default_factory=list)
    tolerance: float | None = None
    output: str | None = None
    seed: int = 0
    random: int = 0
    prior: str = "uniform"
    h: float = 1e-3
    n: int | None = None
    cap: int = DEFAULT_ENUMERATION_CAP

    def check(self):
        if self.steps is not None and self.steps < 0:
            raise UsageError("--steps must be >= 0")
        if not self.delta > 0:
            raise UsageError("--delta must be positive")
        if self.tolerance is not None and not self.tolerance > 0:
            raise UsageError("--tolerance must be positive")
        if not self.h > 0:
            raise UsageError("--h must be positive")
        if self.operator not in OPERATORS:
            raise UsageError(f"unknown operator {self.operator!r}")
        if self.random < 0:
            raise UsageError("--random must be >= 0")


def load(source: str) -> Mdp:
    if source in BUILTIN_NAMES:
        return builtin_example(source)
    if "\n" not in source and ":" not in source and not Path(source).exists():
        raise UsageError(f"{source!r} is neither a builtin ({', '.join(BUILTIN_NAMES)}) "
                         "nor an existing file")
    return load_mdp(source)


def make_prior(config: RunConfig, m: Mdp) -> Policy:
    if config.prior == "uniform":
        return Policy.uniform(m)
    if config.prior == "random":
        return random_prior(m, config.seed)
    raise UsageError(f"unknown prior {config.prior!r}; use 'uniform' or 'random'")


# -- iterate -------------------------------------------------------------------

def build_iteration(config: RunConfig, m: Mdp):
    prior = make_prior(config, m)
    k = 2 if config.steps is None else config.steps
    if config.operator == "G":
        return iterate_G(m, prior, k, config.delta)
    if config.operator == "F":
        return folded_sequence(m, prior, k, config.delta)
    if config.operator == "H":
        return cumulative_folded_sequence(m, prior, k, config.delta)
    if config.operator == "temp":
        try:
            return iterate_temperature(m, prior, k, config.schedule, config.alphas, config.delta)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    return iterate_coherence(m, prior, Softmax(config.delta), k)


def trace_csv(trace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for e in trace.entries:
        writer.writerow([e.k, trace.operator, fmt(e.J), fmt(e.success_prob), fmt(e.kappa),
                         fmt(e.tv_step), fmt(e.tv_to_limit)])
    return buf.getvalue()


def run_iterate(config: RunConfig) -> int:
    config.check()
    m = load(config.mdp)
    _check_cap(m, config.cap)
    text = trace_csv(build_iteration(config, m))
    if config.output:
        with open(config.output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- verify --------------------------------------------------------------------

def _kl_report(m: Mdp, prior: Policy, tolerance: float, cap: int) -> Report:
    post = goal_condition(m, prior)
    report = Report("occupancy-form trajectory KL")
    for name, a, b in (("KL(prior || G_1)", prior, post), ("KL(G_1 || prior)", post, prior)):
        fast, slow = trajectory_kl(m, a, b), oracle_trajectory_kl(m, a, b, cap)
        gap = 0.0 if fast == slow else abs(fast - slow)
        report.expect_at_most(f"|{name} occupancy - enumeration|", gap, tolerance)
    return report


def single_check(check: str, m: Mdp, prior: Policy, config: RunConfig) -> Report:
    tol = config.tolerance
    steps = config.steps
    if check == "equivalence":
        return check_equivalence(m, prior, steps or (3 if is_deterministic(m) else 8),
                                 tol or 1e-8)
    if check == "equivalence-strict-temp":
        return check_strict_temperature(m, prior, steps or 2, tol or 1e-8)
    if check == "improvement":
        return improvement_audit(m, prior, steps or 8, tol or 1e-10)
    if check == "qv":
        return oracle_check_qv(m, prior, tol or 1e-9, config.cap)
    if check == "factorization":
        return check_deterministic_factorization(m, prior, tol or 1e-9, config.cap)
    if check == "rate":
        return rate_check(m, prior, steps or 16, config.h)
    if check == "stability":
        return stability_conflict_demo(m, prior)
    if check == "convergence":
        kwargs = {} if tol is None else {"tv_threshold": tol}
        return convergence_probe(m, prior, steps or 32, 1 / 32, **kwargs)
    if check == "kl":
        return _kl_report(m, prior, tol or 1e-9, config.cap)
    raise UsageError(f"unknown check {check!r}; choose from {', '.join(CHECKS)}")


def _random_kind(check: str) -> list[bool]:
    """Which dynamics (deterministic?) a randomized suite draws."""
    if check in ("factorization", "rate"):
        return [True]
    if check == "equivalence":
        return [True, False]
    return [False]


def random_check(check: str, config: RunConfig) -> Report:
    """Run ``check`` on ``config.random`` seeded MDPs per dynamics kind."""
    if check == "stability":
        raise UsageError("the stability check has no random suite")
    summary = Report(f"{check} on random MDPs (n={config.random}, seed={config.seed})")
    worst, failures, skipped = 0.0, [], 0
    for deterministic in _random_kind(check):
        done, seed = 0, config.seed
        while done < config.random:
            m = random_mdp(seed, deterministic=deterministic)
            prior = random_prior(m, seed)
            seed += 1
            try:
                report = single_check(check, m, prior, config)
            except PreconditionError:
                skipped += 1
                if skipped > 10 * config.random + 100:
                    raise
                continue
            done += 1
            worst = max(worst, report.max_gap)
            if not report.passed:
                bad = [c.line() for c in report.checks if not c.passed]
                failures.append(f"{m.name}: " + "; ".join(bad[:2]))
        summary.notes.append(f"{'deterministic' if deterministic else 'stochastic'}: "
                             f"seeds {config.seed}..{seed - 1}")
    if skipped:
        summary.notes.append(f"{skipped} draws skipped (precondition not met)")
    summary.notes.append(f"largest measured gap: {fmt(worst)}")
    summary.notes += failures[:10]
    summary.expect_at_most("failing instances", len(failures), 0)
    return summary


def run_verify(config: RunConfig, check: str) -> int:
    config.check()
    if check not in CHECKS:
        raise UsageError(f"unknown check {check!r}; choose from {', '.join(CHECKS)}")
    if config.random:
        report = random_check(check, config)
    else:
        if config.mdp is None:
            config.mdp = "stability_tree" if check == "stability" else "mountain_race"
        m = load(config.mdp)
        _check_cap(m, config.cap)
        report = single_check(check, m, make_prior(config, m), config)
    print(report.render())
    return EXIT_OK if report.passed else EXIT_FAIL


# -- examples ------------------------------------------------------------------

def golden_values(loader=builtin_example) -> list[tuple[str, float, float]]:
    """(label, measured, expected) for each reference value of the builtins."""
    mr, tc = loader("mountain_race"), loader("temperature_counter")
    um, ut = Policy.uniform(mr), Policy.uniform(tc)
    out = []

    def add(label, measured, expected):
        out.append((label, float(measured), float(Fraction(expected))))

    add("mountain_race T", mr.horizon, 2)
    add("mountain_race silver success", np.exp(mr.terminal_reward[mr.state_index("silver_up")]),
        "3/4")
    a1 = tc.action_index("a1")
    root = tc.state_index("root")
    add("temperature_counter tau(root, a1 -> s1)", tc.transition[root, a1, tc.state_index("s1")],
        "3/4")
    st = loader("stability_tree")
    s2p = st.state_index("s2p")
    add("stability_tree split at s2p", st.transition[s2p, 0, st.state_index("s3p")], "2/3")

    q = soft_values(mr, um).q_row(mr, 0, "start")
    add("Q(start, up) = log 1/2", q[0], np.log(0.5))
    add("Q(start, down) = log 3/4", q[1], np.log(0.75))
    add("limit policy at start, down", limit_policy(mr, um).row(mr, 0, "start")[1], 1)

    trace = iterate_coherence(mr, um, Softmax(1.0), 2)
    step1, step2 = trace[1].policy, trace[2].policy
    add("coherence step 1, start up", step1.row(mr, 0, "start")[0], "2/5")
    add("coherence step 1, start down", step1.row(mr, 0, "start")[1], "3/5")
    add("coherence step 1, mountain up", step1.row(mr, 1, "mountain")[0], 1)
    add("coherence step 1, mountain down", step1.row(mr, 1, "mountain")[1], 0)
    add("coherence step 2, start up", step2.row(mr, 0, "start")[0], "4/7")
    add("coherence step 2, start down", step2.row(mr, 0, "start")[1], "3/7")
    add("coherence step 2, mountain up", step2.row(mr, 1, "mountain")[0], 1)
    add("coherence step 2, forest up", step2.row(mr, 1, "forest")[0], "1/2")
    add("fixpoint kappa", trace[2].kappa, 0)
    add("fixpoint gold-path probability",
        step2.row(mr, 0, "start")[0] * step2.row(mr, 1, "mountain")[0], "4/7")
    add("fixpoint occupancy of mountain", occupancy(mr, step2)[1, mr.state_index("mountain")],
        "4/7")

    g1 = goal_condition(mr, um)
    add("G_1 mountain_race, start up", g1.row(mr, 0, "start")[0], "2/5")
    g = g_sequence(tc, ut, 2)
    f1 = folded_sequence(tc, ut, 2)
    alpha2 = temperature_policy(tc, ut, 2.0)
    add("G_1 temperature_counter, a1", g[1].row(tc, 0, "root")[0], "5/11")
    add("G_1 temperature_counter, a2", g[1].row(tc, 0, "root")[1], "6/11")
    add("F_1 temperature_counter, a1", f1[1].policy.row(tc, 0, "root")[0], "5/11")
    add("G_2 temperature_counter, a1", g[2].row(tc, 0, "root")[0], "25/61")
    add("G_2 temperature_counter, a2", g[2].row(tc, 0, "root")[1], "36/61")
    add("F_2 temperature_counter, a1", f1[2].policy.row(tc, 0, "root")[0], "25/61")
    add("F_2 temperature_counter, a2", f1[2].policy.row(tc, 0, "root")[1], "36/61")
    add("alpha=2 temperature_counter, a1", alpha2.row(tc, 0, "root")[0], "7/17")
    add("alpha=2 temperature_counter, a2", alpha2.row(tc, 0, "root")[1], "10/17")
    add("F_2 - pi_alpha=2 at root (nonzero)",
        f1[2].policy.row(tc, 0, "root")[0] - alpha2.row(tc, 0, "root")[0], "-2/1037")
    return out


def run_examples(loader=builtin_example, stream=None) -> int:
    stream = stream or sys.stdout
    rows = golden_values(loader)
    failed = 0
    for label, measured, expected in rows:
        ok = abs(measured - expected) <= EXAMPLE_TOL
        failed += not ok
        print(f"[{'PASS' if ok else 'FAIL'}] {label}: measured {fmt(measured)} "
              f"expected {fmt(expected)}", file=stream)
    print(f"{len(rows) - failed}/{len(rows)} reference values reproduced", file=stream)
    return EXIT_OK if failed == 0 else EXIT_FAIL


# -- validate / stability ----------------------------------------------------------

def run_validate(config: RunConfig) -> int:
    m = load(config.mdp)
    problems = validate_mdp(m)
    for p in problems:
        print(p, file=sys.stderr)
    if problems:
        return EXIT_USAGE
    kind = "deterministic" if is_deterministic(m) else "stochastic"
    print(f"ok: {m!r} ({kind} dynamics)")
    return EXIT_OK


def run_stability(config: RunConfig) -> int:
    m = load(config.mdp)
    prior = make_prior(config, m)
    if config.n is not None:
        report = n_policy_stable(m, prior, config.n)
        print(report.render())
        for c in report.comparisons:
            print(f"  {c.describe()}")
        return EXIT_OK
    report = stability_conflict_demo(m, prior)
    print(report.render())
    return EXIT_OK if report.passed else EXIT_FAIL


# -- argument parsing ------------------------------------------------------------

def _common(p: argparse.ArgumentParser, mdp_default="mountain_race"):
    p.add_argument("--mdp", default=mdp_default,
                   help=f"builtin name ({', '.join(BUILTIN_NAMES)}) or a YAML/JSON file"
                        + ("" if mdp_default else "; defaults to the check's natural builtin"))
    p.add_argument("--prior", default="uniform", choices=["uniform", "random"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap", type=int, default=DEFAULT_ENUMERATION_CAP,
                   help="enumeration cap on |S|^(T+1)|A|^T")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="incoherence", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="load an MDP and check it")
    p.add_argument("mdp", help="builtin name or file")

    p = sub.add_parser("iterate", help="emit a CSV trace of an operator")
    _common(p)
    p.add_argument("--operator", choices=OPERATORS, default="G")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--schedule", choices=["pow2", "linear", "explicit"], default="pow2")
    p.add_argument("--alphas", type=float, nargs="*", default=[])
    p.add_argument("--output", default=None)

    p = sub.add_parser("verify", help="run a named verifier")
    p.add_argument("check", help=", ".join(CHECKS))
    _common(p, mdp_default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--tolerance", type=float, default=None)
    p.add_argument("--random", type=int, default=0, help="run on N seeded random MDPs")
    p.add_argument("--h", type=float, default=1e-3, help="finite-difference step (rate)")

    sub.add_parser("examples", help="recompute the reference values")

    p = sub.add_parser("stability", help="n-policy-stability and the conflict demo")
    _common(p, mdp_default="stability_tree")
    p.add_argument("--n", type=int, default=None, help="single lookahead depth")
    return parser


def config_from_args(args) -> RunConfig:
    fields = RunConfig.__dataclass_fields__
    return RunConfig(**{k: v for k, v in vars(args).items() if k in fields})


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "examples":
            return run_examples()
        config = config_from_args(args)
        if args.command == "validate":
            return run_validate(config)
        if args.command == "iterate":
            return run_iterate(config)
        if args.command == "verify":
            return run_verify(config, args.check)
        return run_stability(config)
    except EnumerationCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (UsageError, MdpError, PreconditionError, KeyError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
