"""Timing checker vs an all-pairs matrix oracle, plus rule-table sanity."""

import math
import random

import numpy as np
import pytest

from dramlab.timing import (
    DDR3_RULES,
    DDR4_RULES,
    RuleError,
    Scope,
    TimingChecker,
    TimingRule,
    VIOLATION_CSV_HEADER,
    rules_from_config,
    violations_to_csv,
)

BANKED = ("ACT", "PRE", "READ", "WRITE")
DEVICE_WIDE = ("PREA", "REF", "ZQS")


def oracle_violations(trace, rules, slot_ns):
    """Brute-force reference: all-pairs matrices, one per rule.

    ``trace`` is a list of (cmd, bank_or_None, slot) with strictly
    increasing slots.  Returns the set of violation key tuples.
    """
    n = len(trace)
    if n == 0:
        return set()
    banks = np.array([-1 if b is None else b for _, b, _ in trace])
    times = np.array([t for _, _, t in trace], dtype=np.int64)
    earlier = np.tri(n, k=-1, dtype=bool)  # earlier[j, i]: i comes before j
    same_bank = (
        (banks[:, None] == banks[None, :]) & (banks[:, None] >= 0)
    )
    found = set()
    for rule in rules:
        min_slots = math.ceil(rule.min_ns / slot_ns - 1e-9)
        is_prev = np.array([c == rule.prev for c, _, _ in trace])
        is_next = np.array([c == rule.next for c, _, _ in trace])
        pair_ok = earlier & is_prev[None, :]
        if rule.scope is Scope.SAME_BANK:
            pair_ok &= same_bank
            is_next &= banks >= 0
        prev_t = np.where(pair_ok, times[None, :], -1).max(axis=1)
        hits = is_next & (prev_t >= 0) & (times - prev_t < min_slots)
        for j in np.nonzero(hits)[0]:
            bank = None if banks[j] < 0 else int(banks[j])
            found.add(
                (int(times[j]), rule.name, int(prev_t[j]), bank, rule.prev, rule.next)
            )
    return found


def run_checker(trace, rules, slot_ns):
    checker = TimingChecker(rules, slot_ns)
    out = []
    for cmd, bank, t in trace:
        out.extend(checker.observe(cmd, bank, t))
    return out


def checker_keys(trace, rules, slot_ns):
    return {v.key() for v in run_checker(trace, rules, slot_ns)}


def random_trace(rng, max_len=200, n_banks=4, gaps=(1, 2, 3, 4, 5, 8, 13, 40)):
    trace = []
    t = 0
    for _ in range(rng.randrange(1, max_len + 1)):
        cmd = rng.choice(BANKED + DEVICE_WIDE)
        bank = rng.randrange(n_banks) if cmd in BANKED else None
        trace.append((cmd, bank, t))
        t += rng.choice(gaps)
    return trace


class TestFrozenCases:
    def test_early_precharge_same_bank(self):
        # ACT then PRE four slots later: 6 ns, tRAS needs 33 ns.
        trace = [("ACT", 2, 0), ("PRE", 2, 4)]
        viols = run_checker(trace, DDR4_RULES, 1.5)
        assert len(viols) == 1
        v = viols[0]
        assert v.rule.name == "tRAS"
        assert (v.prev_time, v.cur_time, v.bank) == (0, 4, 2)
        assert v.required_ns == 33.0
        assert v.actual_ns == 6.0

    def test_other_bank_precharge_is_clean(self):
        trace = [("ACT", 2, 0), ("PRE", 3, 4)]
        assert run_checker(trace, DDR4_RULES, 1.5) == []

    def test_device_wide_precharge_hits_same_device_rule(self):
        trace = [("ACT", 2, 0), ("PREA", None, 4)]
        viols = run_checker(trace, DDR4_RULES, 1.5)
        assert [v.rule.name for v in viols] == ["tRAS"]
        assert viols[0].rule.scope is Scope.SAME_DEVICE
        assert viols[0].bank is None

    def test_only_latest_predecessor_binds(self):
        # The second ACT is the binding one; the first is farther away.
        trace = [("ACT", 0, 0), ("ACT", 0, 100), ("PRE", 0, 104)]
        viols = run_checker(trace, DDR4_RULES, 1.5)
        assert [v.rule.name for v in viols] == ["tRAS"]
        assert viols[0].prev_time == 100

    def test_back_to_back_refresh_violates_two_rules(self):
        trace = [("REF", None, 0), ("REF", None, 100)]
        names = sorted(v.rule.name for v in run_checker(trace, DDR4_RULES, 1.5))
        assert names == ["tREFI", "tRFC"]

    def test_act_to_act_across_banks(self):
        # tRRD is 4 slots at 1.5 ns; 3 slots apart violates, 4 does not.
        bad = [("ACT", 0, 0), ("ACT", 1, 3)]
        good = [("ACT", 0, 0), ("ACT", 1, 4)]
        assert [v.rule.name for v in run_checker(bad, DDR4_RULES, 1.5)] == ["tRRD"]
        assert run_checker(good, DDR4_RULES, 1.5) == []

    def test_read_after_act_needs_nine_slots(self):
        good = [("ACT", 0, 0), ("READ", 0, 9)]
        bad = [("ACT", 0, 0), ("READ", 0, 8)]
        assert run_checker(good, DDR4_RULES, 1.5) == []
        assert [v.rule.name for v in run_checker(bad, DDR4_RULES, 1.5)] == ["tRCD"]

    def test_non_multiple_delay_rounds_up(self):
        rule = TimingRule("tRAS", "ACT", "PRE", Scope.SAME_BANK, 32.0)
        assert rule.min_slots(1.5) == 22
        assert not rule.is_slot_multiple(1.5)
        viols = run_checker([("ACT", 0, 0), ("PRE", 0, 4)], [rule], 1.5)
        assert len(viols) == 1 and viols[0].actual_ns == 6.0

    def test_negative_delay_rejected(self):
        with pytest.raises(RuleError):
            TimingRule("bad", "ACT", "PRE", Scope.SAME_BANK, -1.0)

    def test_unknown_scope_rejected(self):
        with pytest.raises(ValueError):
            TimingRule("bad", "ACT", "PRE", "same_rank", 6.0)


class TestTables:
    @pytest.mark.parametrize(
        "rules,slot_ns", [(DDR4_RULES, 1.5), (DDR3_RULES, 2.5)]
    )
    def test_delays_are_slot_multiples(self, rules, slot_ns):
        for rule in rules:
            assert rule.is_slot_multiple(slot_ns), rule.name

    @pytest.mark.parametrize("rules", [DDR4_RULES, DDR3_RULES])
    def test_scopes_match_command_kinds(self, rules):
        # Device-wide commands can never carry a bank, so any rule that
        # names one must be device-scoped.
        for rule in rules:
            if rule.prev in DEVICE_WIDE or rule.next in DEVICE_WIDE:
                assert rule.scope is Scope.SAME_DEVICE, rule.name

    def test_round_trip_through_config_entries(self):
        entries = [
            {
                "name": r.name,
                "prev": r.prev,
                "next": r.next,
                "scope": r.scope.value,
                "min_ns": r.min_ns,
            }
            for r in DDR4_RULES
        ]
        assert rules_from_config(entries) == DDR4_RULES


class TestCsv:
    def test_header_and_rows(self):
        viols = run_checker([("ACT", 2, 0), ("PRE", 2, 4)], DDR4_RULES, 1.5)
        text = violations_to_csv(viols)
        assert text == (
            "bus_slot,rule,bank,prev_cmd,cur_cmd,required_ns,actual_ns\n"
            "4,tRAS,2,ACT,PRE,33,6\n"
        )

    def test_device_wide_bank_field_is_empty(self):
        viols = run_checker([("ACT", 2, 0), ("PREA", None, 4)], DDR4_RULES, 1.5)
        row = violations_to_csv(viols).splitlines()[1]
        assert row == "4,tRAS,,ACT,PREA,33,6"

    def test_empty_input_is_header_only(self):
        assert violations_to_csv([]) == VIOLATION_CSV_HEADER + "\n"


class TestOracleEquivalence:
    @pytest.mark.parametrize(
        "rules,slot_ns", [(DDR4_RULES, 1.5), (DDR3_RULES, 2.5)]
    )
    def test_standard_tables(self, rules, slot_ns):
        rng = random.Random(0x71)
        for _ in range(60):
            trace = random_trace(rng)
            assert checker_keys(trace, rules, slot_ns) == oracle_violations(
                trace, rules, slot_ns
            )

    def test_random_tables(self):
        rng = random.Random(0x72)
        all_cmds = BANKED + DEVICE_WIDE
        for _ in range(40):
            rules = [
                TimingRule(
                    f"r{i}",
                    rng.choice(all_cmds),
                    rng.choice(all_cmds),
                    rng.choice((Scope.SAME_BANK, Scope.SAME_DEVICE)),
                    1.5 * rng.randrange(1, 41),
                )
                for i in range(rng.randrange(1, 9))
            ]
            trace = random_trace(rng, max_len=120)
            assert checker_keys(trace, rules, 1.5) == oracle_violations(
                trace, rules, 1.5
            )

    def test_relaxing_a_rule_never_adds_violations(self):
        rng = random.Random(0x73)
        for _ in range(20):
            trace = random_trace(rng, max_len=120, gaps=(1, 2, 3, 5))
            tight = checker_keys(trace, DDR4_RULES, 1.5)
            relaxed_rules = [
                TimingRule(
                    r.name, r.prev, r.next, r.scope, 1.5 * (r.min_slots(1.5) // 2)
                )
                for r in DDR4_RULES
            ]
            assert checker_keys(trace, relaxed_rules, 1.5) <= tight

    def test_single_commands_never_violate(self):
        for cmd in BANKED:
            assert checker_keys([(cmd, 0, 0)], DDR4_RULES, 1.5) == set()
        for cmd in DEVICE_WIDE:
            assert checker_keys([(cmd, None, 0)], DDR4_RULES, 1.5) == set()
