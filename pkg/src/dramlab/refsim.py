"""Reference interpreter: a deliberately simple, non-pipelined execution of a
label-resolved instruction list.  Used by the assembler to size readback
hints (dynamic READ counts per instruction) and by tests as an independent
recount oracle for the cycle-level emulator's command histogram.

No timing is modeled; `cycles` read through LDPC is approximated by the step
count, so programs that branch on it may diverge from the emulator.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .isa import (
    SCRATCHPAD_WORDS,
    DramInstr,
    DramOpcode,
    Register,
    RegularOp,
    RegularOpcode,
)

M32 = 0xFFFFFFFF


@dataclass
class SimResult:
    histogram: Counter = field(default_factory=Counter)
    reads_by_index: dict[int, int] = field(default_factory=dict)
    steps: int = 0
    halted: bool = False
    hit_limit: bool = False
    regs: list[int] = field(default_factory=lambda: [0] * 17)


def _stride_for(opcode: DramOpcode) -> Register:
    return Register.RASR if opcode == DramOpcode.ACT else Register.CASR


def simulate(items, *, max_steps: int = 2_000_000) -> SimResult:
    """Run label-resolved instructions (a list of objects with an ``instr``
    attribute, or plain instructions) until END, fall-off, or the step
    budget."""
    instrs = [getattr(it, "instr", it) for it in items]
    res = SimResult()
    regs = res.regs
    sp = [0] * SCRATCHPAD_WORDS
    hist = res.histogram
    pc = 0
    while 0 <= pc < len(instrs):
        if res.steps >= max_steps:
            res.hit_limit = True
            return res
        res.steps += 1
        instr = instrs[pc]
        if isinstance(instr, DramInstr):
            for cmd in instr.slots:
                if cmd.opcode == DramOpcode.NOP:
                    continue
                hist[cmd.opcode.name] += 1
                if cmd.opcode == DramOpcode.READ:
                    res.reads_by_index[pc] = res.reads_by_index.get(pc, 0) + 1
                if cmd.inc_a:
                    regs[cmd.reg_a] = (regs[cmd.reg_a] + regs[Register.BASR]) & M32
                if cmd.inc_b:
                    stride = _stride_for(cmd.opcode)
                    regs[cmd.reg_b] = (regs[cmd.reg_b] + regs[stride]) & M32
            pc += 1
            continue

        op = instr.opcode
        if op == RegularOpcode.END:
            res.halted = True
            return res
        if op == RegularOpcode.LI:
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
                res.halted = True  # emulator traps here; stop counting
                return res
            regs[instr.rd] = sp[addr]
        elif op == RegularOpcode.ST:
            addr = (regs[instr.rs1] + instr.imm) & M32
            if addr >= SCRATCHPAD_WORDS:
                res.halted = True
                return res
            sp[addr] = regs[instr.rs2]
        elif op == RegularOpcode.BL:
            if regs[instr.rs1] < regs[instr.rs2]:
                pc = instr.imm
                continue
        elif op == RegularOpcode.BEQ:
            if regs[instr.rs1] == regs[instr.rs2]:
                pc = instr.imm
                continue
        elif op == RegularOpcode.JUMP:
            pc = instr.imm
            continue
        elif op == RegularOpcode.LDPC:
            regs[instr.rd] = _counter(instr.imm, res) & M32
        # SLEEP, LDWD, SRE, SRX, HINT have no register-flow effect here
        pc += 1
    res.halted = True
    return res


def _counter(counter_id: int, res: SimResult) -> int:
    if counter_id == 0:
        return res.steps  # approximation; see module docstring
    names = ("ACT", "READ", "WRITE", "PRE", "REF")
    if 1 <= counter_id <= 5:
        name = names[counter_id - 1]
        if name == "PRE":
            return res.histogram["PRE"] + res.histogram["PREA"]
        return res.histogram[name]
    return 0
