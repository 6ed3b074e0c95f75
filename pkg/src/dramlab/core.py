"""Cycle-level emulation of the programmable core.

Time base: one core cycle = 4 bus slots.  Every instruction consumes core
cycles (so wall-clock time advances through regular instructions too); a
DRAM instruction additionally occupies the DRAM pipeline for its 4 bus
slots, issuing its commands at wall slots ``cycle*4 + slot``.

Pipeline effects are reduced to their architectural consequences: control
flow always costs 1 + 6 cycles, a scratchpad load's consumer pays one
interlock cycle, and END costs the 5-cycle pipeline drain.  Results are
always architecturally correct — no value ever arrives late.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .builder import ProgramTooLarge
from .dram import DramError, IssuedCommand
from .isa import (
    INSTR_CAPACITY,
    PERF_COUNTERS,
    SCRATCHPAD_WORDS,
    WDR_SLICES,
    DramInstr,
    DramOpcode,
    Register,
    RegularOp,
    RegularOpcode,
    decode,
    unpack_image,
)

M32 = 0xFFFFFFFF
SLOTS_PER_CYCLE = 4
BRANCH_CYCLES = 7  # commit + deterministic 6-cycle penalty, taken or not.
END_DRAIN_CYCLES = 5  # commit + drain of the rest of the pipe
REG_FILE_SIZE = 16  # R0..R12 + BASR/RASR/CASR


class CoreError(Exception):
    code = "CoreError"


class AlreadyHalted(CoreError):
    code = "AlreadyHalted"


class UnknownCounter(CoreError):
    code = "UnknownCounter"


@dataclass(frozen=True)
class TrapInfo:
    kind: str
    detail: str
    pc: int


@dataclass
class StepEvents:
    cycles: int = 0
    issued: list = field(default_factory=list)
    device_events: list = field(default_factory=list)
    transfers: int = 0
    hint_stalled: bool = False
    trap: TrapInfo | None = None
    halted: bool = False


@dataclass
class CoreState:
    program: list = field(default_factory=list)
    regs: list = field(default_factory=lambda: [0] * REG_FILE_SIZE)
    wdr: bytearray = field(default_factory=lambda: bytearray(WDR_SLICES * 4))
    scratchpad: list = field(default_factory=lambda: [0] * SCRATCHPAD_WORDS)
    pc: int = 0
    core_cycle: int = 0
    bus_slot: int = 0  # DRAM-pipeline activity: 4 per committed DRAM instruction
    halted: bool = False
    trap: TrapInfo | None = None
    stalled_on_hint: int | None = None
    stall_cycles: int = 0
    hint_guard_remaining: int = 0  # transfers still covered by the last hint
    acts_issued: int = 0
    reads_issued: int = 0
    writes_issued: int = 0
    pres_issued: int = 0
    refs_issued: int = 0
    pending_load_rd: int | None = None  # interlock source for the next instruction

    @property
    def wall_slot(self) -> int:
        return self.core_cycle * SLOTS_PER_CYCLE

    def perf_snapshot(self) -> dict:
        return {
            "cycles": self.core_cycle,
            "acts_issued": self.acts_issued,
            "reads_issued": self.reads_issued,
            "writes_issued": self.writes_issued,
            "pres_issued": self.pres_issued,
            "refs_issued": self.refs_issued,
        }


def read_perf_counter(core: CoreState, counter_id: int) -> int:
    if not 0 <= counter_id < len(PERF_COUNTERS):
        raise UnknownCounter(f"performance counter id {counter_id}")
    return core.perf_snapshot()[PERF_COUNTERS[counter_id]] & M32


def load_program(core: CoreState, image, capacity: int = INSTR_CAPACITY) -> CoreState:
    """Load an assembled image (bytes, an assembled program, or a raw
    instruction list) into instruction memory and reset control state."""
    if isinstance(image, (bytes, bytearray)):
        instructions = [decode(word) for word in unpack_image(bytes(image))]
    elif hasattr(image, "instructions"):
        instructions = list(image.instructions)
    else:
        instructions = list(image)
    if len(instructions) > capacity:
        raise ProgramTooLarge(
            f"{len(instructions)} instructions exceed capacity {capacity}"
        )
    core.program = instructions
    core.pc = 0
    core.halted = False
    core.trap = None
    core.stalled_on_hint = None
    core.pending_load_rd = None
    return core


def _trap(core: CoreState, ev: StepEvents, kind: str, detail: str) -> None:
    core.trap = TrapInfo(kind, detail, core.pc)
    core.halted = True
    ev.trap = core.trap
    ev.halted = True


def _reads(instr) -> set:
    """Register ids an instruction reads (for the load interlock)."""
    if isinstance(instr, DramInstr):
        regs = set()
        for cmd in instr.slots:
            if cmd.opcode == DramOpcode.NOP:
                continue
            if cmd.opcode in (DramOpcode.ACT, DramOpcode.READ, DramOpcode.WRITE):
                regs.update((cmd.reg_a, cmd.reg_b))
            elif cmd.opcode == DramOpcode.PRE:
                regs.add(cmd.reg_a)
            if cmd.inc_a:
                regs.add(int(Register.BASR))
            if cmd.inc_b:
                regs.add(int(_stride_register(cmd.opcode)))
        return regs
    op = instr.opcode
    if op in (RegularOpcode.LD, RegularOpcode.ADDI, RegularOpcode.MV,
              RegularOpcode.LDWD):
        return {instr.rs1}
    if op == RegularOpcode.SRC:
        return {instr.rd, instr.rs1}
    if op in (RegularOpcode.ST, RegularOpcode.AND, RegularOpcode.OR,
              RegularOpcode.XOR, RegularOpcode.ADD, RegularOpcode.SUB,
              RegularOpcode.BL, RegularOpcode.BEQ):
        return {instr.rs1, instr.rs2}
    return set()


def _stride_register(opcode: DramOpcode) -> Register:
    return Register.RASR if opcode == DramOpcode.ACT else Register.CASR


def _issue_command(core: CoreState, cmd, t: int) -> IssuedCommand:
    opcode = cmd.opcode
    if opcode == DramOpcode.ACT:
        return IssuedCommand(
            "ACT", t, bank=core.regs[cmd.reg_a], row=core.regs[cmd.reg_b]
        )
    if opcode == DramOpcode.PRE:
        return IssuedCommand("PRE", t, bank=core.regs[cmd.reg_a])
    if opcode == DramOpcode.READ:
        return IssuedCommand(
            "READ",
            t,
            bank=core.regs[cmd.reg_a],
            col=core.regs[cmd.reg_b],
            auto_precharge=cmd.auto_precharge,
        )
    if opcode == DramOpcode.WRITE:
        return IssuedCommand(
            "WRITE",
            t,
            bank=core.regs[cmd.reg_a],
            col=core.regs[cmd.reg_b],
            auto_precharge=cmd.auto_precharge,
            data=bytes(core.wdr),
        )
    return IssuedCommand(opcode.name, t)  # PREA / REF / ZQS


def _count_issue(core: CoreState, op: str) -> None:
    if op == "ACT":
        core.acts_issued += 1
    elif op == "READ":
        core.reads_issued += 1
    elif op == "WRITE":
        core.writes_issued += 1
    elif op in ("PRE", "PREA"):
        core.pres_issued += 1
    elif op == "REF":
        core.refs_issued += 1


def _exec_dram(core: CoreState, instr: DramInstr, device, fifo,
               base_cycle: int, ev: StepEvents) -> None:
    for slot, cmd in enumerate(instr.slots):
        if cmd.opcode == DramOpcode.NOP:
            continue
        t = base_cycle * SLOTS_PER_CYCLE + slot
        issued = _issue_command(core, cmd, t)
        try:
            dev_ev = device.apply_command(issued)
        except DramError as exc:
            _trap(core, ev, exc.code, str(exc))
            break
        ev.issued.append(issued)
        ev.device_events.append(dev_ev)
        _count_issue(core, issued.op)
        if issued.op == "READ":
            if fifo is not None:
                if fifo.free_space <= 0:
                    _trap(core, ev, "FifoOverflow",
                          "READ issued with no FIFO space (missing hint?)")
                    break
                fifo.push(dev_ev.read_data)
            ev.transfers += 1
            if core.hint_guard_remaining > 0:
                core.hint_guard_remaining -= 1
        # post-command stride auto-increment
        if cmd.inc_a and cmd.opcode in (
            DramOpcode.ACT, DramOpcode.PRE, DramOpcode.READ, DramOpcode.WRITE
        ):
            core.regs[cmd.reg_a] = (
                core.regs[cmd.reg_a] + core.regs[Register.BASR]
            ) & M32
        if cmd.inc_b and cmd.opcode in (
            DramOpcode.ACT, DramOpcode.READ, DramOpcode.WRITE
        ):
            stride = core.regs[_stride_register(cmd.opcode)]
            core.regs[cmd.reg_b] = (core.regs[cmd.reg_b] + stride) & M32
    core.bus_slot += SLOTS_PER_CYCLE


def _exec_regular(core: CoreState, instr: RegularOp, device,
                  ev: StepEvents) -> int:
    """Execute one regular op; returns its cycle cost. pc is updated here."""
    op = instr.opcode
    regs = core.regs
    cost = 1
    next_pc = core.pc + 1

    if op == RegularOpcode.END:
        core.halted = True
        ev.halted = True
        cost = END_DRAIN_CYCLES
    elif op == RegularOpcode.LI:
        regs[instr.rd] = instr.imm
    elif op == RegularOpcode.MV:
        regs[instr.rd] = regs[instr.rs1]
    elif op == RegularOpcode.ADD:
        regs[instr.rd] = (regs[instr.rs1] + regs[instr.rs2]) & M32
    elif op == RegularOpcode.SUB:
        regs[instr.rd] = (regs[instr.rs1] - regs[instr.rs2]) & M32
    elif op == RegularOpcode.ADDI:
        regs[instr.rd] = (regs[instr.rs1] + instr.imm) & M32
    elif op == RegularOpcode.AND:
        regs[instr.rd] = regs[instr.rs1] & regs[instr.rs2]
    elif op == RegularOpcode.OR:
        regs[instr.rd] = regs[instr.rs1] | regs[instr.rs2]
    elif op == RegularOpcode.XOR:
        regs[instr.rd] = regs[instr.rs1] ^ regs[instr.rs2]
    elif op == RegularOpcode.SRC:
        n = regs[instr.rs1] & 31
        v = regs[instr.rd]
        regs[instr.rd] = ((v >> n) | (v << (32 - n))) & M32 if n else v
    elif op == RegularOpcode.LD:
        addr = (regs[instr.rs1] + instr.imm) & M32
        if addr >= SCRATCHPAD_WORDS:
            _trap(core, ev, "ScratchpadOutOfRange", f"load from word {addr}")
        else:
            regs[instr.rd] = core.scratchpad[addr]
            core.pending_load_rd = instr.rd
    elif op == RegularOpcode.ST:
        addr = (regs[instr.rs1] + instr.imm) & M32
        if addr >= SCRATCHPAD_WORDS:
            _trap(core, ev, "ScratchpadOutOfRange", f"store to word {addr}")
        else:
            core.scratchpad[addr] = regs[instr.rs2]
    elif op == RegularOpcode.BL:
        if regs[instr.rs1] < regs[instr.rs2]:
            next_pc = instr.imm
        cost = BRANCH_CYCLES
    elif op == RegularOpcode.BEQ:
        if regs[instr.rs1] == regs[instr.rs2]:
            next_pc = instr.imm
        cost = BRANCH_CYCLES
    elif op == RegularOpcode.JUMP:
        next_pc = instr.imm
        cost = BRANCH_CYCLES
    elif op == RegularOpcode.SLEEP:
        cost = instr.imm  # builder never emits SLEEP 0; 0 is a free no-op
    elif op == RegularOpcode.LDWD:
        core.wdr[instr.rd * 4 : instr.rd * 4 + 4] = regs[instr.rs1].to_bytes(
            4, "little"
        )
    elif op == RegularOpcode.LDPC:
        try:
            regs[instr.rd] = read_perf_counter(core, instr.imm)
        except UnknownCounter as exc:
            _trap(core, ev, exc.code, str(exc))
    elif op == RegularOpcode.SRE:
        if device is not None:
            device.enter_self_refresh(core.wall_slot)
    elif op == RegularOpcode.SRX:
        if device is not None:
            device.exit_self_refresh(core.wall_slot)
    elif op == RegularOpcode.HINT:
        core.hint_guard_remaining = instr.imm  # gate passed; arm the guard
    core.pc = next_pc
    return cost


def step(core: CoreState, device, fifo=None) -> StepEvents:
    """Advance one instruction (or one stall cycle when blocked on a hint)."""
    if core.halted:
        raise AlreadyHalted(f"program halted at pc={core.pc}")
    ev = StepEvents()

    if not 0 <= core.pc < len(core.program):
        _trap(core, ev, "DecodeTrap",
              f"pc {core.pc} outside the {len(core.program)}-instruction image")
        ev.cycles = 1
        core.core_cycle += 1
        core.pending_load_rd = None
        return ev

    instr = core.program[core.pc]

    # readback-hint stall: block while the FIFO cannot absorb the next run
    if (
        isinstance(instr, RegularOp)
        and instr.opcode == RegularOpcode.HINT
        and fifo is not None
        and fifo.free_space < instr.imm
    ):
        core.stalled_on_hint = instr.imm
        core.stall_cycles += 1
        ev.hint_stalled = True
        ev.cycles = 1
        core.core_cycle += 1
        core.pending_load_rd = None
        return ev
    core.stalled_on_hint = None

    penalty = 0
    if core.pending_load_rd is not None and core.pending_load_rd in _reads(instr):
        penalty = 1
    core.pending_load_rd = None

    if isinstance(instr, DramInstr):
        _exec_dram(core, instr, device, fifo, core.core_cycle + penalty, ev)
        if not core.halted:
            core.pc += 1
        cost = 1
    else:
        cost = _exec_regular(core, instr, device, ev)

    ev.cycles = penalty + cost
    core.core_cycle += ev.cycles
    return ev


@dataclass
class RunReport:
    cycles: int = 0
    bus_slots: int = 0
    wall_slots: int = 0
    histogram: Counter = field(default_factory=Counter)
    timing_violations: list = field(default_factory=list)
    state_violations: list = field(default_factory=list)
    fifo_high_water: int = 0
    stall_cycles: int = 0
    transfers: int = 0
    flips: int = 0
    trap: TrapInfo | None = None
    halted: bool = False
    max_cycles_exceeded: bool = False
    perf: dict = field(default_factory=dict)
    injected: list = field(default_factory=list)  # (wall_slot, op) periodic ops
    trace: list = field(default_factory=list)

    def absorb(self, ev: StepEvents, collect_trace: bool = False) -> None:
        """Merge one step's events into the running totals."""
        for cmd in ev.issued:
            self.histogram[cmd.op] += 1
            if collect_trace:
                self.trace.append(trace_row(cmd))
        for dev_ev in ev.device_events:
            self.timing_violations.extend(dev_ev.timing_violations)
            self.state_violations.extend(dev_ev.state_violations)
            self.flips += sum(f.cells_changed for f in dev_ev.flips)
        self.transfers += ev.transfers

    def finalize(self, core: CoreState, fifo=None) -> "RunReport":
        self.cycles = core.core_cycle
        self.bus_slots = core.bus_slot
        self.wall_slots = core.wall_slot
        self.stall_cycles = core.stall_cycles
        self.trap = core.trap
        self.halted = core.halted
        self.perf = core.perf_snapshot()
        if fifo is not None:
            self.fifo_high_water = fifo.high_water
        return self

    def to_dict(self) -> dict:
        return {
            "cycles": self.cycles,
            "bus_slots": self.bus_slots,
            "wall_slots": self.wall_slots,
            "histogram": dict(self.histogram),
            "timing_violations": len(self.timing_violations),
            "state_violations": len(self.state_violations),
            "fifo_high_water": self.fifo_high_water,
            "stall_cycles": self.stall_cycles,
            "transfers": self.transfers,
            "flips": self.flips,
            "trap": None if self.trap is None else {
                "kind": self.trap.kind,
                "detail": self.trap.detail,
                "pc": self.trap.pc,
            },
            "halted": self.halted,
            "max_cycles_exceeded": self.max_cycles_exceeded,
            "perf": dict(self.perf),
            "injected": len(self.injected),
        }


def trace_row(cmd: IssuedCommand) -> tuple:
    addr = cmd.row if cmd.op == "ACT" else cmd.col
    return (cmd.t, cmd.op, cmd.bank, addr)


def trace_to_csv(rows) -> str:
    lines = []
    for t, op, bank, addr in rows:
        bank_s = "" if bank is None else str(bank)
        addr_s = "" if addr is None else str(addr)
        lines.append(f"slot,{t},{op},{bank_s},{addr_s}")
    return "\n".join(lines) + ("\n" if lines else "")


def run(
    core: CoreState,
    device,
    fifo=None,
    host=None,
    scheduler=None,
    max_cycles: int = 10_000_000,
    collect_trace: bool = False,
) -> RunReport:
    """Step until END, a trap, or the cycle budget; aggregate the events.

    ``scheduler``, when given, is polled before every step and may inject
    periodic DRAM operations at idle points (see the platform layer)."""
    report = RunReport()
    while not core.halted:
        if core.core_cycle >= max_cycles:
            report.max_cycles_exceeded = True
            break
        injected_cycles = 0
        if scheduler is not None:
            injected_cycles = scheduler.poll(core, device, report, collect_trace)
        ev = step(core, device, fifo)
        report.absorb(ev, collect_trace)
        if host is not None and fifo is not None:
            host.tick(fifo, ev.cycles + injected_cycles)
    return report.finalize(core, fifo)
