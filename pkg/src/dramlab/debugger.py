"""Offline program debugging on the emulator: breakpoints, single-stepping,
register/scratchpad probing, per-violation reporting with the issuing
instruction's address, and an optional value-change dump (VCD) of bank
states, bus commands, and FIFO occupancy.

A debug session never perturbs execution: probes are read-only snapshots and
breakpoints only decide where stepping pauses, so the command trace equals
an unattended run of the same program."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import core as core_mod
from .core import CoreState, RunReport, load_program
from .dram import BankStatus, DramDevice
from .isa import SCRATCHPAD_WORDS, WDR_SLICES, DramOpcode, Register
from .platform import Platform


class DebugError(Exception):
    code = "DebugError"


class OutOfRange(DebugError):
    code = "OutOfRange"


class UnknownTarget(DebugError):
    code = "UnknownTarget"


@dataclass(frozen=True)
class StopInfo:
    reason: str  # breakpoint | halted | trap | count | already_halted | stalled
    pc: int
    cycles: int
    trap_kind: str | None = None


_BANK_STATE_CODES = {
    BankStatus.PRECHARGED: 0,
    BankStatus.ACTIVATING: 1,
    BankStatus.ACTIVE: 2,
    BankStatus.PRECHARGING: 3,
}

_STALL_LIMIT = 1_000_000  # hint-stall cycles before step_n/continue gives up


class VcdWriter:
    """Buffers value changes and emits a standard VCD text document."""

    def __init__(self, device: DramDevice, slot_ns: float) -> None:
        self.slot_ns = slot_ns
        self.n_banks = device.geometry.banks
        self._events: dict[int, list[tuple[str, int, int]]] = {}
        self._ids = {}
        names = [("cmd", 4), ("fifo", 16)]
        names += [(f"bank{i}", 2) for i in range(self.n_banks)]
        for i, (name, width) in enumerate(names):
            self._ids[name] = (chr(33 + i), width)
        self._last: dict[str, int] = {name: 0 for name, _ in names}
        self._cmd_times: set[int] = set()

    def change(self, t: int, name: str, value: int) -> None:
        if self._last.get(name) == value:
            return
        self._last[name] = value
        sid, width = self._ids[name]
        self._events.setdefault(t, []).append((sid, width, value))

    def record_command(self, t: int, op: str) -> None:
        code = int(DramOpcode[op])
        sid, width = self._ids["cmd"]
        self._events.setdefault(t, []).append((sid, width, code))
        self._cmd_times.add(t)
        self._last["cmd"] = code

    def sample(self, t: int, device: DramDevice, fifo) -> None:
        for i, bank in enumerate(device.banks):
            self.change(t, f"bank{i}", _BANK_STATE_CODES[bank.status])
        if fifo is not None:
            self.change(t, "fifo", fifo.occupancy)

    def render(self) -> str:
        # drop the command bus back to NOP one slot after each command
        for t in sorted(self._cmd_times):
            if t + 1 not in self._cmd_times:
                sid, width = self._ids["cmd"]
                self._events.setdefault(t + 1, []).insert(0, (sid, width, 0))
        lines = [
            "$comment dramlab bus activity $end",
            f"$timescale {int(round(self.slot_ns * 1000))} ps $end",
            "$scope module dramlab $end",
        ]
        for name, (sid, width) in self._ids.items():
            lines.append(f"$var wire {width} {sid} {name} $end")
        lines.append("$upscope $end")
        lines.append("$enddefinitions $end")
        lines.append("$dumpvars")
        for name, (sid, width) in self._ids.items():
            lines.append(f"b0 {sid}")
        lines.append("$end")
        for t in sorted(self._events):
            lines.append(f"#{t}")
            for sid, width, value in self._events[t]:
                lines.append(f"b{value:b} {sid}")
        return "\n".join(lines) + "\n"


_SP_RE = re.compile(r"^(?:sp|scratchpad)\[(\d+)(?:\.\.(\d+))?\]$", re.IGNORECASE)
_WDR_RE = re.compile(r"^wdr\[(\d+)\]$", re.IGNORECASE)


class DebugSession:
    """Interactive execution of one program on one platform (scheduler off)."""

    def __init__(self, platform: Platform, program, vcd: bool = False) -> None:
        self.platform = platform
        self.program = program
        self.labels = dict(getattr(program, "labels", {}) or {})
        self.core: CoreState = load_program(CoreState(), program)
        self.breakpoints: set[int] = set()
        self.report = RunReport()
        self.violation_log: list[tuple[int, object]] = []
        self._viol_cursor = 0
        self.vcd = VcdWriter(platform.device, platform.slot_ns) if vcd else None

    # -- targets ---------------------------------------------------------

    def resolve_address(self, target: str | int) -> int:
        if isinstance(target, int) or str(target).lstrip("-").isdigit():
            addr = int(target)
        elif str(target) in self.labels:
            addr = self.labels[str(target)]
        else:
            raise UnknownTarget(f"no label or address {target!r}")
        if not 0 <= addr < len(self.core.program):
            raise OutOfRange(
                f"address {addr} outside the {len(self.core.program)}-instruction program"
            )
        return addr

    def add_breakpoint(self, target: str | int) -> int:
        addr = self.resolve_address(target)
        self.breakpoints.add(addr)
        return addr

    def remove_breakpoint(self, target: str | int) -> None:
        self.breakpoints.discard(self.resolve_address(target))

    # -- execution -------------------------------------------------------

    def _stop(self, reason: str) -> StopInfo:
        trap = self.core.trap
        return StopInfo(
            reason,
            self.core.pc,
            self.core.core_cycle,
            trap.kind if trap else None,
        )

    def _step_committed(self) -> object | None:
        """One committed instruction (riding through hint stalls); None when
        the stall limit is exhausted."""
        pc0 = self.core.pc
        for _ in range(_STALL_LIMIT):
            ev = core_mod.step(self.core, self.platform.device, self.platform.fifo)
            self.report.absorb(ev, collect_trace=True)
            self.platform.host.tick(self.platform.fifo, ev.cycles)
            for dev_ev in ev.device_events:
                for v in dev_ev.timing_violations:
                    self.violation_log.append((pc0, v))
                for v in dev_ev.state_violations:
                    self.violation_log.append((pc0, v))
            if self.vcd is not None:
                for cmd in ev.issued:
                    self.vcd.record_command(cmd.t, cmd.op)
                self.vcd.sample(
                    self.core.wall_slot, self.platform.device, self.platform.fifo
                )
            if not ev.hint_stalled:
                return ev
        return None

    def step_n(self, n: int = 1) -> StopInfo:
        if self.core.halted:
            return self._stop("already_halted")
        for _ in range(max(0, n)):
            ev = self._step_committed()
            if ev is None:
                return self._stop("stalled")
            if self.core.halted:
                self.report.finalize(self.core, self.platform.fifo)
                return self._stop("trap" if self.core.trap else "halted")
            if self.core.pc in self.breakpoints:
                return self._stop("breakpoint")
        return self._stop("count")

    def continue_(self) -> StopInfo:
        if self.core.halted:
            return self._stop("already_halted")
        while True:
            ev = self._step_committed()
            if ev is None:
                return self._stop("stalled")
            if self.core.halted:
                self.report.finalize(self.core, self.platform.fifo)
                return self._stop("trap" if self.core.trap else "halted")
            if self.core.pc in self.breakpoints:
                return self._stop("breakpoint")

    # -- probing ----------------------------------------------------------

    def probe(self, target: str):
        """Read a register ('R5', 'CASR'), a scratchpad range ('sp[0..3]'),
        or a WDR slice ('wdr[2]')."""
        name = target.strip()
        upper = name.upper()
        if upper in Register.__members__ and upper != "WDR":
            return self.core.regs[int(Register[upper])]
        m = _SP_RE.match(name)
        if m:
            lo = int(m.group(1))
            hi = int(m.group(2)) if m.group(2) is not None else lo
            if not (0 <= lo <= hi < SCRATCHPAD_WORDS):
                raise OutOfRange(f"scratchpad range {lo}..{hi} outside 0..1023")
            values = self.core.scratchpad[lo : hi + 1]
            return values[0] if m.group(2) is None else values
        m = _WDR_RE.match(name)
        if m:
            k = int(m.group(1))
            if not 0 <= k < WDR_SLICES:
                raise OutOfRange(f"WDR slice {k} outside 0..{WDR_SLICES - 1}")
            return int.from_bytes(self.core.wdr[4 * k : 4 * k + 4], "little")
        raise UnknownTarget(f"cannot probe {target!r}")

    def new_violations(self) -> list[tuple[int, object]]:
        out = self.violation_log[self._viol_cursor :]
        self._viol_cursor = len(self.violation_log)
        return out

    def finish_report(self) -> RunReport:
        return self.report.finalize(self.core, self.platform.fifo)


def simulate(program, platform: Platform) -> DebugSession:
    """Run a program to completion with the periodic scheduler disabled and
    every timing/state violation attributed to its issuing instruction."""
    session = DebugSession(platform, program)
    session.continue_()
    session.finish_report()
    return session


# ---------------------------------------------------------------------------
# terminal REPL

_HELP = """commands:
  b <label|addr>   set a breakpoint
  s [n]            step n committed instructions (default 1)
  c                continue to breakpoint/END/trap
  p <target>       probe R0..R12/BASR/RASR/CASR, sp[a..b], wdr[k]
  viol             show violations since the last check
  q                quit
"""


def _format_violation(addr: int, v) -> str:
    if hasattr(v, "csv_row"):
        return f"[instr {addr}] timing: " + ",".join(v.csv_row())
    return f"[instr {addr}] state: {v.kind} bank={v.bank} cmd={v.cmd} t={v.t}"


def run_repl(session: DebugSession, in_stream, out_stream) -> None:
    """Drive a session from a line-oriented stream (stdin in the CLI)."""

    def emit(text: str) -> None:
        out_stream.write(text + "\n")

    def show(info: StopInfo) -> None:
        extra = f" trap={info.trap_kind}" if info.trap_kind else ""
        emit(f"stop: {info.reason} pc={info.pc} cycle={info.cycles}{extra}")

    while True:
        out_stream.write("(dbg) ")
        out_stream.flush()
        line = in_stream.readline()
        if not line:
            break
        parts = line.split()
        if not parts:
            continue
        op, args = parts[0], parts[1:]
        try:
            if op == "q":
                break
            elif op == "b" and len(args) == 1:
                addr = session.add_breakpoint(args[0])
                emit(f"breakpoint at instruction {addr}")
            elif op == "s":
                n = int(args[0]) if args else 1
                show(session.step_n(n))
            elif op == "c":
                show(session.continue_())
            elif op == "p" and len(args) == 1:
                emit(f"{args[0]} = {session.probe(args[0])}")
            elif op == "viol":
                fresh = session.new_violations()
                if not fresh:
                    emit("no new violations")
                for addr, v in fresh:
                    emit(_format_violation(addr, v))
            else:
                emit(_HELP.rstrip())
        except DebugError as exc:
            emit(f"error: {exc}")
