"""Verdict reports: named assertions with measured value and tolerance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any


def fmt(x: Any) -> str:
    """12 significant digits; infinities as ``inf`` / ``-inf``."""
    if x is None:
        return ""
    if isinstance(x, (bool, str)):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".12g")


@dataclass
class Check:
    name: str
    measured: float
    tolerance: float | None
    passed: bool
    relation: str = "<="
    detail: str = ""

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        bound = "" if self.tolerance is None else f" {self.relation} {fmt(self.tolerance)}"
        tail = f"  ({self.detail})" if self.detail else ""
        return f"[{mark}] {self.name}: {fmt(self.measured)}{bound}{tail}"


@dataclass
class Report:
    title: str
    checks: list[Check] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    data: dict = field(default_factory=dict)

    def expect_at_most(self, name: str, measured: float, tolerance: float,
                       detail: str = "") -> Check:
        check = Check(name, float(measured), tolerance,
                      bool(measured <= tolerance), "<=", detail)
        self.checks.append(check)
        return check

    def expect_above(self, name: str, measured: float, bound: float,
                     detail: str = "") -> Check:
        check = Check(name, float(measured), bound, bool(measured > bound), ">", detail)
        self.checks.append(check)
        return check

    def expect(self, name: str, condition: bool, measured: Any = None,
               detail: str = "") -> Check:
        value = float(measured) if measured is not None else float(bool(condition))
        check = Check(name, value, None, bool(condition), "", detail)
        self.checks.append(check)
        return check

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_gap(self) -> float:
        gaps = [c.measured for c in self.checks if c.relation == "<="]
        return max(gaps, default=0.0)

    def render(self) -> str:
        lines = [f"== {self.title} =="]
        lines += [c.line() for c in self.checks]
        lines += [f"note: {n}" for n in self.notes]
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"verdict: {verdict} ({sum(c.passed for c in self.checks)}"
                     f"/{len(self.checks)} assertions)")
        return "\n".join(lines)
