"""Debug sessions: breakpoints, stepping, probes, violation attribution
against the all-pairs oracle, REPL scripting, VCD output, and the
non-interference guarantee (a debugged run equals an unattended one)."""

from __future__ import annotations

import io
import random

import pytest
from conftest import listing1, make_device
from test_timing import oracle_violations

from dramlab.builder import Program
from dramlab.core import CoreState, load_program, run
from dramlab.debugger import (
    DebugSession,
    OutOfRange,
    UnknownTarget,
    VcdWriter,
    run_repl,
    simulate,
)
from dramlab.isa import DramInstr, Register as R
from dramlab.platform import HostDrain, Platform, ReadbackFifo
from dramlab.timing import DDR4_RULES


def make_platform(**kw) -> Platform:
    return Platform(make_device(), **kw)


def session_for(program, **kw) -> DebugSession:
    return DebugSession(make_platform(), program, **kw)


def hot_program(rng: random.Random):
    """Random command mix with deliberately illegal spacing everywhere."""
    p = Program()
    p.append_li(R.R5, rng.randrange(4))
    p.append_li(R.R4, rng.randrange(64))
    p.append_li(R.R3, 8 * rng.randrange(16))
    for _ in range(rng.randrange(3, 10)):
        roll = rng.random()
        if roll < 0.40:
            p.append_act(R.R5, False, R.R4, False, delay=rng.choice((0, 1, 2, 5, 9)))
        elif roll < 0.70:
            p.append_read(R.R5, False, R.R3, False, delay=rng.choice((0, 1, 4)))
        elif roll < 0.85:
            p.append_pre(R.R5, delay=rng.choice((0, 1, 8)))
        else:
            p.append_prea(delay=rng.choice((0, 3)))
    return p.assemble()


# ---------------------------------------------------------------------------
# breakpoints and stepping


class TestBreakpoints:
    def test_breakpoint_by_label_stops_at_read(self):
        prog = listing1()
        s = session_for(prog)
        addr = s.add_breakpoint("read")
        assert addr == prog.labels["read"]
        info = s.continue_()
        assert info.reason == "breakpoint"
        assert info.pc == addr
        assert isinstance(s.core.program[info.pc], DramInstr)
        assert s.probe("R3") == 0  # the first READ has not executed yet

    def test_breakpoint_by_address(self):
        s = session_for(listing1())
        s.add_breakpoint(2)
        info = s.continue_()
        assert (info.reason, info.pc) == ("breakpoint", 2)
        assert info.cycles == 2

    def test_continue_hits_every_loop_iteration(self):
        prog = listing1()
        s = session_for(prog)
        s.add_breakpoint("read")
        stops = 0
        cols = []
        info = s.continue_()
        while info.reason == "breakpoint":
            stops += 1
            cols.append(s.probe("R3"))
            info = s.continue_()
        assert stops == 128
        assert cols == [8 * i for i in range(128)]
        assert info.reason == "halted"
        assert s.probe("R3") == 1024

    def test_remove_breakpoint(self):
        s = session_for(listing1())
        s.add_breakpoint("read")
        s.remove_breakpoint("read")
        assert s.continue_().reason == "halted"

    def test_unknown_label_rejected(self):
        s = session_for(listing1())
        with pytest.raises(UnknownTarget):
            s.add_breakpoint("nosuch")

    @pytest.mark.parametrize("addr", [-1, 13, 500])
    def test_out_of_program_address_rejected(self, addr):
        s = session_for(listing1())  # 13 instructions: valid range is 0..12
        with pytest.raises(OutOfRange):
            s.add_breakpoint(addr)

    def test_numeric_string_address(self):
        s = session_for(listing1())
        assert s.add_breakpoint("9") == 9


class TestStepping:
    def test_step_advances_one_instruction(self):
        s = session_for(listing1())
        info = s.step_n(1)
        assert (info.reason, info.pc, info.cycles) == ("count", 1, 1)

    def test_step_n_advances_n(self):
        s = session_for(listing1())
        info = s.step_n(5)
        assert (info.reason, info.pc) == ("count", 5)

    def test_step_runs_into_halt(self):
        s = session_for(listing1())
        info = s.step_n(10_000)
        assert info.reason == "halted"
        assert s.core.halted

    def test_step_zero_is_a_no_op(self):
        s = session_for(listing1())
        info = s.step_n(0)
        assert (info.reason, info.pc, info.cycles) == ("count", 0, 0)

    def test_step_stops_at_breakpoint_first(self):
        s = session_for(listing1())
        s.add_breakpoint(3)
        info = s.step_n(10)
        assert (info.reason, info.pc) == ("breakpoint", 3)

    def test_already_halted_reason(self):
        s = session_for(listing1())
        assert s.continue_().reason == "halted"
        assert s.continue_().reason == "already_halted"
        assert s.step_n(1).reason == "already_halted"

    def test_trap_stop_reason(self):
        def build(p):
            p.append_li(R.R1, 2000)
            p.append_ld(R.R2, R.R1)

        prog = Program()
        build(prog)
        s = session_for(prog.assemble())
        info = s.continue_()
        assert info.reason == "trap"
        assert info.trap_kind == "ScratchpadOutOfRange"

    def test_stall_stop_when_hint_can_never_clear(self):
        prog = Program()
        prog.append_hint(32)
        prog = prog.assemble()
        platform = Platform(
            make_device(), fifo=ReadbackFifo(capacity=16), host=HostDrain(0.0)
        )
        s = DebugSession(platform, prog)
        assert s.step_n(1).reason == "stalled"


# ---------------------------------------------------------------------------
# probes


class TestProbe:
    def _stopped_session(self):
        s = session_for(listing1())
        s.step_n(5)  # all five LIs retired
        return s

    def test_register_values(self):
        s = self._stopped_session()
        assert s.probe("R5") == 0  # bank
        assert s.probe("R4") == 0  # row
        assert s.probe("R6") == 1024
        assert s.probe("CASR") == 8

    def test_case_insensitive_register(self):
        s = self._stopped_session()
        assert s.probe("r6") == 1024
        assert s.probe("casr") == 8

    def test_scratchpad_single_and_range(self):
        def build(p):
            p.append_li(R.R1, 7)
            p.append_li(R.R2, 0)
            p.append_st(R.R1, R.R2, 3)
            p.append_st(R.R1, R.R2, 4)

        prog = Program()
        build(prog)
        s = session_for(prog.assemble())
        s.continue_()
        assert s.probe("sp[3]") == 7
        assert s.probe("sp[2..4]") == [0, 7, 7]
        assert s.probe("scratchpad[3]") == 7

    def test_wdr_slice(self):
        def build(p):
            p.append_li(R.R1, 0xDEAD)
            p.append_ldwd(2, R.R1)

        prog = Program()
        build(prog)
        s = session_for(prog.assemble())
        s.continue_()
        assert s.probe("wdr[2]") == 0xDEAD
        assert s.probe("wdr[0]") == 0

    @pytest.mark.parametrize(
        "target", ["sp[1024]", "sp[0..1024]", "sp[5..2]", "wdr[16]", "wdr[99]"]
    )
    def test_out_of_range_probe(self, target):
        s = self._stopped_session()
        with pytest.raises(OutOfRange):
            s.probe(target)

    @pytest.mark.parametrize("target", ["R99", "WDR", "bogus", "sp[]", ""])
    def test_unknown_probe_target(self, target):
        s = self._stopped_session()
        with pytest.raises(UnknownTarget):
            s.probe(target)

    def test_probes_do_not_advance_execution(self):
        s = self._stopped_session()
        before = (s.core.pc, s.core.core_cycle)
        s.probe("R6")
        s.probe("sp[0..9]")
        s.probe("wdr[0]")
        assert (s.core.pc, s.core.core_cycle) == before


# ---------------------------------------------------------------------------
# violation reporting


class TestViolations:
    def test_violation_attributed_to_issuing_instruction(self):
        p = Program()
        p.append_li(R.R5, 0)
        p.append_li(R.R4, 0)
        p.append_li(R.R3, 0)
        p.append_act(R.R5, False, R.R4, False)
        p.append_read(R.R5, False, R.R3, False)  # same instruction word: tRCD
        s = simulate(p.assemble(), make_platform())
        rules_hit = {v.rule.name for _, v in s.violation_log if hasattr(v, "rule")}
        assert "tRCD" in rules_hit
        for addr, _ in s.violation_log:
            assert isinstance(s.core.program[addr], DramInstr)

    def test_clean_program_reports_nothing(self):
        s = simulate(listing1(), make_platform())
        assert s.report.timing_violations == []
        assert s.report.state_violations == []
        assert s.violation_log == []

    def test_new_violations_cursor(self):
        p = Program()
        p.append_li(R.R5, 0)
        p.append_li(R.R4, 0)
        p.append_act(R.R5, False, R.R4, False)
        p.append_pre(R.R5)  # violates tRAS immediately
        s = session_for(p.assemble())
        s.continue_()
        first = s.new_violations()
        assert first  # everything so far
        assert s.new_violations() == []  # cursor advanced

    def test_report_matches_all_pairs_oracle(self):
        rng = random.Random(0xD0C5)
        checked = 0
        for _ in range(60):
            prog = hot_program(rng)
            s = simulate(prog, make_platform())
            trace = [(op, bank, t) for t, op, bank, _ in s.report.trace]
            got = {v.key() for v in s.report.timing_violations}
            want = oracle_violations(trace, DDR4_RULES, 1.5)
            assert got == want
            checked += len(want)
        assert checked > 100  # the corpus actually exercises violations

    def test_log_and_report_agree(self):
        rng = random.Random(7)
        prog = hot_program(rng)
        s = simulate(prog, make_platform())
        timing_in_log = [v for _, v in s.violation_log if hasattr(v, "rule")]
        assert timing_in_log == s.report.timing_violations
        state_in_log = [v for _, v in s.violation_log if not hasattr(v, "rule")]
        assert state_in_log == s.report.state_violations


# ---------------------------------------------------------------------------
# non-interference


class TestNonInterference:
    def test_debugged_run_equals_unattended_run(self):
        prog = listing1()
        unattended = make_platform().execute(prog, collect_trace=True)

        s = session_for(prog)
        s.add_breakpoint("read")
        info = s.continue_()
        while info.reason in ("breakpoint", "count"):
            s.probe("R3")
            s.probe("sp[0..7]")
            info = s.step_n(3)
        assert info.reason == "halted"
        report = s.finish_report()

        assert report.trace == unattended.trace
        assert report.histogram == unattended.histogram
        assert report.cycles == unattended.cycles
        assert report.transfers == unattended.transfers

    def test_vcd_capture_does_not_perturb(self):
        prog = listing1()
        plain = simulate(prog, make_platform()).report
        with_vcd = DebugSession(make_platform(), prog, vcd=True)
        with_vcd.continue_()
        report = with_vcd.finish_report()
        assert report.trace == plain.trace
        assert report.cycles == plain.cycles


# ---------------------------------------------------------------------------
# VCD output


class TestVcd:
    def _vcd_text(self, prog=None) -> str:
        s = DebugSession(make_platform(), prog or listing1(), vcd=True)
        s.continue_()
        return s.vcd.render()

    def test_header_and_declarations(self):
        text = self._vcd_text()
        assert "$timescale 1500 ps $end" in text
        assert "$var wire 4 ! cmd $end" in text
        assert '$var wire 16 " fifo $end' in text
        for i in range(16):
            assert f" bank{i} $end" in text
        assert "$enddefinitions $end" in text
        assert "$dumpvars" in text

    def test_command_edges(self):
        text = self._vcd_text()
        lines = text.splitlines()
        # ACT commits at wall slot 24, READs start at 36, PRE at 4132
        i = lines.index("#24")
        assert "b1 !" in lines[i + 1 : i + 4]  # ACT opcode 1
        i = lines.index("#36")
        assert "b100 !" in lines[i + 1 : i + 4]  # READ opcode 4
        i = lines.index("#4132")
        assert "b10 !" in lines[i + 1 : i + 4]  # PRE opcode 2

    def test_command_bus_returns_to_nop(self):
        text = self._vcd_text()
        lines = text.splitlines()
        i = lines.index("#25")  # slot after the lone ACT
        assert "b0 !" in lines[i + 1 : i + 3]

    def test_bank_state_transitions(self):
        text = self._vcd_text()
        assert "b1 #" in text  # bank0 activating
        assert "b10 #" in text  # bank0 active (settled by the first READ)
        assert "b11 #" in text  # bank0 precharging

    def test_fifo_occupancy_tracked(self):
        text = self._vcd_text()
        assert 'b1 "' in text  # at least one pending transfer was visible

    def test_times_strictly_increase(self):
        text = self._vcd_text()
        times = [int(l[1:]) for l in text.splitlines() if l.startswith("#")]
        assert times == sorted(times)
        assert len(times) == len(set(times))

    def test_untouched_banks_never_change(self):
        text = self._vcd_text()
        # listing1 only touches bank 0 (id '#'); bank 5 is id chr(35+5)
        bank5 = chr(ord("#") + 5)
        body = text.split("$dumpvars")[1]
        changes = [
            l for l in body.splitlines() if l.endswith(f" {bank5}") and l != "$end"
        ]
        assert changes == [f"b0 {bank5}"]  # only the initial dump

    def test_render_is_deterministic(self):
        assert self._vcd_text() == self._vcd_text()


# ---------------------------------------------------------------------------
# REPL


def repl(script: str, prog=None, platform=None) -> str:
    s = DebugSession(platform or make_platform(), prog or listing1())
    out = io.StringIO()
    run_repl(s, io.StringIO(script), out)
    return out.getvalue()


class TestRepl:
    def test_breakpoint_continue_probe_quit(self):
        out = repl("b read\nc\np R3\nc\np R3\nq\n")
        assert "breakpoint at instruction 9" in out
        assert "stop: breakpoint pc=9" in out
        assert "R3 = 0" in out
        assert "R3 = 8" in out

    def test_step_command(self):
        out = repl("s\ns 4\nq\n")
        assert "stop: count pc=1" in out
        assert "stop: count pc=5" in out

    def test_run_to_end_reports_halt(self):
        out = repl("c\nq\n")
        assert "stop: halted pc=13 cycle=1039" in out

    def test_viol_command_empty_then_populated(self):
        out = repl("c\nviol\nq\n")
        assert "no new violations" in out

        p = Program()
        p.append_li(R.R5, 0)
        p.append_li(R.R4, 0)
        p.append_act(R.R5, False, R.R4, False)
        p.append_pre(R.R5)
        out = repl("c\nviol\nq\n", prog=p.assemble())
        assert "timing: " in out
        assert "tRAS" in out

    def test_error_messages_keep_session_alive(self):
        out = repl("b nosuch\np sp[4096]\np R3\nq\n")
        assert "error: no label or address 'nosuch'" in out
        assert "error: scratchpad range" in out
        assert "R3 = 0" in out  # still usable afterwards

    def test_unknown_command_prints_help(self):
        out = repl("frobnicate\nq\n")
        assert "commands:" in out

    def test_eof_terminates(self):
        out = repl("s\n")  # no explicit q
        assert "stop: count pc=1" in out

    def test_trap_shown_in_stop_line(self):
        p = Program()
        p.append_li(R.R1, 5000)
        p.append_ld(R.R2, R.R1)
        out = repl("c\nq\n", prog=p.assemble())
        assert "stop: trap" in out
        assert "trap=ScratchpadOutOfRange" in out
