"""Minimum-delay rules between DRAM commands and a streaming checker.

A rule constrains the distance between the most recent in-scope command of
class ``prev`` and an arriving command of class ``next``: the pair violates
the rule when ``cur_time - prev_time < min_slots``.  Only the most recent
matching predecessor is considered — an earlier one is farther away and can
never be the binding constraint.

All times are integer bus slots; rule delays are given in nanoseconds and
convert to slot counts by rounding up (the shipped tables are exact
multiples of their slot period, so no rounding occurs there).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass


class Scope(str, enum.Enum):
    SAME_BANK = "same_bank"
    SAME_DEVICE = "same_device"


class RuleError(Exception):
    code = "RuleError"


@dataclass(frozen=True)
class TimingRule:
    """One (prev command, next command) minimum-delay constraint."""

    name: str
    prev: str
    next: str
    scope: Scope
    min_ns: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "scope", Scope(self.scope))
        if self.min_ns < 0:
            raise RuleError(f"{self.name}: negative min delay {self.min_ns}")

    def min_slots(self, slot_ns: float) -> int:
        """Slot count for this delay; non-multiples round up (the shipped
        tables are exact multiples of their slot period)."""
        return math.ceil(self.min_ns / slot_ns - 1e-9)

    def is_slot_multiple(self, slot_ns: float) -> bool:
        ratio = self.min_ns / slot_ns
        return abs(ratio - round(ratio)) <= 1e-9


@dataclass(frozen=True)
class TimingViolation:
    rule: TimingRule
    prev_time: int
    cur_time: int
    bank: int | None
    prev_cmd: str
    cur_cmd: str
    slot_ns: float

    @property
    def required_ns(self) -> float:
        return self.rule.min_ns

    @property
    def actual_ns(self) -> float:
        return (self.cur_time - self.prev_time) * self.slot_ns

    def key(self) -> tuple:
        """Identity tuple used for set comparisons against oracles."""
        return (
            self.cur_time,
            self.rule.name,
            self.prev_time,
            self.bank,
            self.prev_cmd,
            self.cur_cmd,
        )

    def csv_row(self) -> list[str]:
        return [
            str(self.cur_time),
            self.rule.name,
            "" if self.bank is None else str(self.bank),
            self.prev_cmd,
            self.cur_cmd,
            f"{self.required_ns:g}",
            f"{self.actual_ns:g}",
        ]


VIOLATION_CSV_HEADER = "bus_slot,rule,bank,prev_cmd,cur_cmd,required_ns,actual_ns"


def violations_to_csv(violations) -> str:
    lines = [VIOLATION_CSV_HEADER]
    lines += [",".join(v.csv_row()) for v in violations]
    return "\n".join(lines) + "\n"


class TimingChecker:
    """Streaming latest-predecessor rule checker."""

    def __init__(self, rules, slot_ns: float) -> None:
        self.slot_ns = float(slot_ns)
        self.rules = list(rules)
        self._by_next: dict[str, list[tuple[TimingRule, int]]] = {}
        for rule in self.rules:
            self._by_next.setdefault(rule.next, []).append(
                (rule, rule.min_slots(self.slot_ns))
            )
        self._last_any: dict[str, int] = {}
        self._last_bank: dict[tuple[str, int], int] = {}

    def observe(self, cmd: str, bank: int | None, t: int) -> list[TimingViolation]:
        """Record one command; return the rules it violates."""
        out = []
        for rule, min_slots in self._by_next.get(cmd, ()):
            if rule.scope is Scope.SAME_BANK:
                if bank is None:
                    continue
                prev_t = self._last_bank.get((rule.prev, bank))
            else:
                prev_t = self._last_any.get(rule.prev)
            if prev_t is not None and t - prev_t < min_slots:
                out.append(
                    TimingViolation(
                        rule=rule,
                        prev_time=prev_t,
                        cur_time=t,
                        bank=bank,
                        prev_cmd=rule.prev,
                        cur_cmd=cmd,
                        slot_ns=self.slot_ns,
                    )
                )
        self._last_any[cmd] = t
        if bank is not None:
            self._last_bank[(cmd, bank)] = t
        return out


def rules_from_config(entries) -> list[TimingRule]:
    """Build rules from config dicts {name, prev, next, scope, min_ns}."""
    return [
        TimingRule(
            name=e["name"],
            prev=e["prev"],
            next=e["next"],
            scope=Scope(e["scope"]),
            min_ns=float(e["min_ns"]),
        )
        for e in entries
    ]


def _table(*rows) -> list[TimingRule]:
    return [TimingRule(*row) for row in rows]


#: JEDEC-typical DDR4 constraints at the 1.5 ns bus slot, rounded to slot
#: multiples (tRFC: 350 -> 351) so standard-compliant programs pass cleanly.
DDR4_RULES = _table(
    ("tRCD", "ACT", "READ", Scope.SAME_BANK, 13.5),
    ("tRCD", "ACT", "WRITE", Scope.SAME_BANK, 13.5),
    ("tRP", "PRE", "ACT", Scope.SAME_BANK, 13.5),
    ("tRP", "PREA", "ACT", Scope.SAME_DEVICE, 13.5),
    ("tRAS", "ACT", "PRE", Scope.SAME_BANK, 33.0),
    ("tRAS", "ACT", "PREA", Scope.SAME_DEVICE, 33.0),
    ("tRC", "ACT", "ACT", Scope.SAME_BANK, 46.5),
    ("tRRD", "ACT", "ACT", Scope.SAME_DEVICE, 6.0),
    ("tCCD", "READ", "READ", Scope.SAME_DEVICE, 6.0),
    ("tCCD", "WRITE", "WRITE", Scope.SAME_DEVICE, 6.0),
    ("tRTP", "READ", "PRE", Scope.SAME_BANK, 7.5),
    ("tRTP", "READ", "PREA", Scope.SAME_DEVICE, 7.5),
    ("tWR", "WRITE", "PRE", Scope.SAME_BANK, 15.0),
    ("tWR", "WRITE", "PREA", Scope.SAME_DEVICE, 15.0),
    ("tRFC", "REF", "ACT", Scope.SAME_DEVICE, 351.0),
    ("tRFC", "REF", "REF", Scope.SAME_DEVICE, 351.0),
    ("tREFI", "REF", "REF", Scope.SAME_DEVICE, 7800.0),
)

#: DDR3 equivalents at the 2.5 ns bus slot.
DDR3_RULES = _table(
    ("tRCD", "ACT", "READ", Scope.SAME_BANK, 15.0),
    ("tRCD", "ACT", "WRITE", Scope.SAME_BANK, 15.0),
    ("tRP", "PRE", "ACT", Scope.SAME_BANK, 15.0),
    ("tRP", "PREA", "ACT", Scope.SAME_DEVICE, 15.0),
    ("tRAS", "ACT", "PRE", Scope.SAME_BANK, 35.0),
    ("tRAS", "ACT", "PREA", Scope.SAME_DEVICE, 35.0),
    ("tRC", "ACT", "ACT", Scope.SAME_BANK, 50.0),
    ("tRRD", "ACT", "ACT", Scope.SAME_DEVICE, 7.5),
    ("tCCD", "READ", "READ", Scope.SAME_DEVICE, 5.0),
    ("tCCD", "WRITE", "WRITE", Scope.SAME_DEVICE, 5.0),
    ("tRTP", "READ", "PRE", Scope.SAME_BANK, 7.5),
    ("tRTP", "READ", "PREA", Scope.SAME_DEVICE, 7.5),
    ("tWR", "WRITE", "PRE", Scope.SAME_BANK, 15.0),
    ("tWR", "WRITE", "PREA", Scope.SAME_DEVICE, 15.0),
    ("tRFC", "REF", "ACT", Scope.SAME_DEVICE, 350.0),
    ("tRFC", "REF", "REF", Scope.SAME_DEVICE, 350.0),
    ("tREFI", "REF", "REF", Scope.SAME_DEVICE, 7800.0),
)
