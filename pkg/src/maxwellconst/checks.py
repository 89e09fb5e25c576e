"""Verdict records shared by every module that checks an inequality."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict


@dataclass(frozen=True)
class Verdict:
    """One asserted relation between two numbers.

    Attributes:
        rule: short tag naming the relation, e.g. ``"main-theorem-chain"``.
        lhs: left-hand number.
        rhs: right-hand number.
        relation: ``"<="`` or ``"=="``.
        tolerance: the allowance used (absolute for ``<=``, relative for ``==``).
        passed: outcome.
        slack: ``rhs - lhs`` for inequalities, ``|lhs - rhs|`` for equalities.
        label: free text locating the check (degree, weight, grid).
    """

    rule: str
    lhs: float
    rhs: float
    relation: str
    tolerance: float
    passed: bool
    slack: float
    label: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def check_le(rule: str, lhs: float, rhs: float, tol: float = 0.0, label: str = "") -> Verdict:
    """``lhs <= rhs + tol``; infinite values compare as usual."""
    lhs, rhs = float(lhs), float(rhs)
    if math.isinf(rhs) and rhs > 0:
        ok = True
        slack = math.inf
    elif math.isinf(lhs) and lhs > 0:
        ok = False
        slack = -math.inf
    else:
        slack = rhs - lhs
        ok = lhs <= rhs + tol
    return Verdict(rule, lhs, rhs, "<=", float(tol), bool(ok), float(slack), label)


def check_close(rule: str, lhs: float, rhs: float, rtol: float, label: str = "") -> Verdict:
    """Relative equality ``|lhs - rhs| <= rtol * max(|lhs|, |rhs|)``; two infinities are equal."""
    lhs, rhs = float(lhs), float(rhs)
    if math.isinf(lhs) or math.isinf(rhs):
        ok = lhs == rhs
        diff = 0.0 if ok else math.inf
    else:
        diff = abs(lhs - rhs)
        ok = diff <= rtol * max(abs(lhs), abs(rhs))
    return Verdict(rule, lhs, rhs, "==", float(rtol), bool(ok), float(diff), label)


def all_passed(verdicts) -> bool:
    return all(v.passed for v in verdicts)
