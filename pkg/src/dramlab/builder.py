"""Program construction: append-style builder, label resolution, delay
materialization, readback-hint insertion, and assembly to the binary format.

Delays are exact: the bus-slot distance between consecutive appended commands
is always 1 + the first command's delay.  Delays of at most
``NOP_INLINE_MAX`` slots become inline NOP slots; longer ones are realized as
flush-padding + a SLEEP of whole core cycles + leading NOP slots, which
preserves the total slot count (1 core cycle = 4 bus slots).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from . import isa
from .isa import (
    NOP,
    DramCommand,
    DramInstr,
    DramOpcode,
    Instruction,
    Register,
    RegularOp,
    RegularOpcode,
)

NOP_INLINE_MAX = 32
SLOTS_PER_CYCLE = 4
#: default budget for the reference simulation that sizes readback hints
HINT_SIM_LIMIT = 2_000_000


class ProgramError(Exception):
    code = "ProgramError"


class UndefinedLabel(ProgramError):
    code = "UndefinedLabel"


class DuplicateLabel(ProgramError):
    code = "DuplicateLabel"


class ProgramTooLarge(ProgramError):
    code = "ProgramTooLarge"


class ReadRunExceedsFifo(ProgramError):
    code = "ReadRunExceedsFifo"


class InvalidRegister(ProgramError):
    code = "InvalidRegister"


@dataclass(frozen=True)
class DelaySpec:
    """Extra bus slots to keep idle after a command."""

    extra_slots: int = 0

    def __post_init__(self) -> None:
        if self.extra_slots < 0:
            raise ProgramError(f"negative delay {self.extra_slots}")


def _delay_slots(delay: int | DelaySpec) -> int:
    if isinstance(delay, DelaySpec):
        return delay.extra_slots
    if delay < 0:
        raise ProgramError(f"negative delay {delay}")
    return int(delay)


def _gpr(reg: int | Register, what: str = "register") -> int:
    reg = int(reg)
    if not 0 <= reg <= 15:
        raise InvalidRegister(f"{what} must be R0..R12/BASR/RASR/CASR, got {reg}")
    return reg


@dataclass
class _Instr:
    instr: Instruction
    label_ref: str | None = None


@dataclass
class _Label:
    name: str


class Program:
    """Append-style test-program builder."""

    def __init__(self) -> None:
        self._items: list[_Instr | _Label] = []
        self._open: list[DramCommand] = []
        self._labels: set[str] = set()

    # -- low-level -----------------------------------------------------

    def _flush(self) -> None:
        if self._open:
            while len(self._open) < isa.SLOTS_PER_INSTR:
                self._open.append(NOP)
            self._items.append(_Instr(DramInstr(tuple(self._open))))
            self._open = []

    def _push_slot(self, cmd: DramCommand) -> None:
        self._open.append(cmd)
        if len(self._open) == isa.SLOTS_PER_INSTR:
            self._flush()

    def append_instr(self, instr: Instruction, label_ref: str | None = None) -> None:
        """Append a whole pre-formed instruction (used by the text parser)."""
        self._flush()
        self._items.append(_Instr(instr, label_ref))

    def append_regular(self, op: RegularOp, label_ref: str | None = None) -> None:
        self.append_instr(op, label_ref)

    def append_dram(self, cmd: DramCommand, delay: int | DelaySpec = 0) -> None:
        """Append one DRAM command followed by exactly ``delay`` idle slots."""
        d = _delay_slots(delay)
        self._push_slot(cmd)
        if d <= NOP_INLINE_MAX:
            for _ in range(d):
                self._push_slot(NOP)
            return
        pad = (isa.SLOTS_PER_INSTR - len(self._open)) % isa.SLOTS_PER_INSTR
        cycles, lead = divmod(d - pad, SLOTS_PER_CYCLE)
        for _ in range(pad):
            self._push_slot(NOP)
        self.append_regular(RegularOp(RegularOpcode.SLEEP, imm=cycles))
        for _ in range(lead):
            self._push_slot(NOP)

    def append_label(self, name: str) -> None:
        if name in self._labels:
            raise DuplicateLabel(f"label {name!r} defined twice")
        self._labels.add(name)
        self._flush()
        self._items.append(_Label(name))

    # -- DRAM command helpers -------------------------------------------

    def append_act(
        self,
        bank_reg: int | Register,
        inc_bank: bool,
        row_reg: int | Register,
        inc_row: bool,
        delay: int | DelaySpec = 0,
    ) -> None:
        self.append_dram(
            DramCommand(
                DramOpcode.ACT,
                reg_a=_gpr(bank_reg, "bank register"),
                reg_b=_gpr(row_reg, "row register"),
                inc_a=inc_bank,
                inc_b=inc_row,
            ),
            delay,
        )

    def append_pre(
        self,
        bank_reg: int | Register,
        inc_bank: bool = False,
        aux: bool = False,
        delay: int | DelaySpec = 0,
    ) -> None:
        self.append_dram(
            DramCommand(
                DramOpcode.PRE,
                reg_a=_gpr(bank_reg, "bank register"),
                inc_a=inc_bank,
                aux=aux,
            ),
            delay,
        )

    def append_prea(self, delay: int | DelaySpec = 0) -> None:
        self.append_dram(DramCommand(DramOpcode.PREA), delay)

    def _append_col_cmd(
        self, opcode, bank_reg, inc_bank, col_reg, inc_col, auto_precharge, aux, delay
    ) -> None:
        self.append_dram(
            DramCommand(
                opcode,
                reg_a=_gpr(bank_reg, "bank register"),
                reg_b=_gpr(col_reg, "column register"),
                inc_a=inc_bank,
                inc_b=inc_col,
                auto_precharge=auto_precharge,
                aux=aux,
            ),
            delay,
        )

    def append_read(
        self,
        bank_reg: int | Register,
        inc_bank: bool,
        col_reg: int | Register,
        inc_col: bool,
        auto_precharge: bool = False,
        aux: bool = False,
        delay: int | DelaySpec = 0,
    ) -> None:
        self._append_col_cmd(
            DramOpcode.READ, bank_reg, inc_bank, col_reg, inc_col, auto_precharge, aux, delay
        )

    def append_write(
        self,
        bank_reg: int | Register,
        inc_bank: bool,
        col_reg: int | Register,
        inc_col: bool,
        auto_precharge: bool = False,
        aux: bool = False,
        delay: int | DelaySpec = 0,
    ) -> None:
        self._append_col_cmd(
            DramOpcode.WRITE, bank_reg, inc_bank, col_reg, inc_col, auto_precharge, aux, delay
        )

    def append_ref(self, delay: int | DelaySpec = 0) -> None:
        self.append_dram(DramCommand(DramOpcode.REF), delay)

    def append_zqs(self, delay: int | DelaySpec = 0) -> None:
        self.append_dram(DramCommand(DramOpcode.ZQS), delay)

    def append_nops(self, slots: int) -> None:
        for _ in range(slots):
            self._push_slot(NOP)

    # -- regular instruction helpers -------------------------------------

    def append_li(self, rd: int | Register, imm: int) -> None:
        self.append_regular(RegularOp(RegularOpcode.LI, rd=_gpr(rd, "rd"), imm=imm))

    def append_mv(self, rd: int | Register, rs1: int | Register) -> None:
        self.append_regular(RegularOp(RegularOpcode.MV, rd=_gpr(rd), rs1=_gpr(rs1)))

    def append_src(self, rd: int | Register, rs1: int | Register) -> None:
        self.append_regular(RegularOp(RegularOpcode.SRC, rd=_gpr(rd), rs1=_gpr(rs1)))

    def _append_alu(self, opcode, rd, rs1, rs2) -> None:
        self.append_regular(
            RegularOp(opcode, rd=_gpr(rd), rs1=_gpr(rs1), rs2=_gpr(rs2))
        )

    def append_and(self, rd, rs1, rs2) -> None:
        self._append_alu(RegularOpcode.AND, rd, rs1, rs2)

    def append_or(self, rd, rs1, rs2) -> None:
        self._append_alu(RegularOpcode.OR, rd, rs1, rs2)

    def append_xor(self, rd, rs1, rs2) -> None:
        self._append_alu(RegularOpcode.XOR, rd, rs1, rs2)

    def append_add(self, rd, rs1, rs2) -> None:
        self._append_alu(RegularOpcode.ADD, rd, rs1, rs2)

    def append_sub(self, rd, rs1, rs2) -> None:
        self._append_alu(RegularOpcode.SUB, rd, rs1, rs2)

    def append_addi(self, rd, rs1, imm: int) -> None:
        self.append_regular(
            RegularOp(RegularOpcode.ADDI, rd=_gpr(rd), rs1=_gpr(rs1), imm=imm)
        )

    def append_ld(self, rd, addr_reg, imm: int = 0) -> None:
        self.append_regular(
            RegularOp(RegularOpcode.LD, rd=_gpr(rd), rs1=_gpr(addr_reg), imm=imm)
        )

    def append_st(self, src_reg, addr_reg, imm: int = 0) -> None:
        self.append_regular(
            RegularOp(RegularOpcode.ST, rs1=_gpr(addr_reg), rs2=_gpr(src_reg), imm=imm)
        )

    def _append_branch(self, opcode, *args) -> None:
        if len(args) != 3:
            raise TypeError(f"{opcode.name} takes 3 operands")
        if isinstance(args[0], str):
            label, rs1, rs2 = args
            self.append_regular(
                RegularOp(opcode, rs1=_gpr(rs1), rs2=_gpr(rs2)), label_ref=label
            )
        elif isinstance(args[2], str):
            # comparison against an immediate: materialize it in the reserved
            # temporary first
            reg, imm, label = args
            self.append_li(isa.RESERVED_TEMP, imm)
            self.append_regular(
                RegularOp(opcode, rs1=_gpr(reg), rs2=isa.RESERVED_TEMP),
                label_ref=label,
            )
        else:
            raise TypeError(
                f"{opcode.name} expects (label, rs1, rs2) or (reg, imm, label)"
            )

    def append_bl(self, *args) -> None:
        """Branch if rs1 < rs2 (unsigned).  Accepts (label, rs1, rs2) or
        (reg, imm, label); the latter loads imm into R12 first."""
        self._append_branch(RegularOpcode.BL, *args)

    def append_beq(self, *args) -> None:
        self._append_branch(RegularOpcode.BEQ, *args)

    def append_jump(self, target: str | int) -> None:
        if isinstance(target, str):
            self.append_regular(RegularOp(RegularOpcode.JUMP), label_ref=target)
        else:
            self.append_regular(RegularOp(RegularOpcode.JUMP, imm=target))

    def append_sleep(self, cycles: int) -> None:
        self.append_regular(RegularOp(RegularOpcode.SLEEP, imm=cycles))

    def append_ldwd(self, slice_idx: int, rs1) -> None:
        if not 0 <= slice_idx < isa.WDR_SLICES:
            raise InvalidRegister(f"WDR slice must be 0..15, got {slice_idx}")
        self.append_regular(
            RegularOp(RegularOpcode.LDWD, rd=slice_idx, rs1=_gpr(rs1))
        )

    def append_ldpc(self, rd, counter: int | str) -> None:
        if isinstance(counter, str):
            counter = isa.PERF_COUNTERS.index(counter)
        self.append_regular(RegularOp(RegularOpcode.LDPC, rd=_gpr(rd), imm=counter))

    def append_sre(self) -> None:
        self.append_regular(RegularOp(RegularOpcode.SRE))

    def append_srx(self) -> None:
        self.append_regular(RegularOp(RegularOpcode.SRX))

    def append_end(self) -> None:
        self.append_regular(RegularOp(RegularOpcode.END))

    def append_hint(self, count: int) -> None:
        self.append_regular(RegularOp(RegularOpcode.HINT, imm=count))

    # -- introspection ----------------------------------------------------

    def counts(self) -> tuple[int, int, int]:
        """(regular, dram, label) item counts, counting the open instruction."""
        regular = dram = labels = 0
        for item in self._items:
            if isinstance(item, _Label):
                labels += 1
            elif isinstance(item.instr, RegularOp):
                regular += 1
            else:
                dram += 1
        if self._open:
            dram += 1
        return regular, dram, labels

    # -- assembly ---------------------------------------------------------

    def assemble(
        self,
        *,
        capacity: int = isa.INSTR_CAPACITY,
        fifo_capacity: int = isa.FIFO_CAPACITY,
        sim_limit: int = HINT_SIM_LIMIT,
    ) -> "AssembledProgram":
        items = list(self._items)
        if self._open:
            tail = list(self._open)
            while len(tail) < isa.SLOTS_PER_INSTR:
                tail.append(NOP)
            items.append(_Instr(DramInstr(tuple(tail))))

        last_instr = next(
            (it for it in reversed(items) if isinstance(it, _Instr)), None
        )
        if last_instr is None or not (
            isinstance(last_instr.instr, RegularOp)
            and last_instr.instr.opcode == RegularOpcode.END
        ):
            items.append(_Instr(RegularOp(RegularOpcode.END)))

        instrs, labels = _layout(items)
        runs = _dram_runs(instrs)
        need_hint = [
            (start, end)
            for start, end in runs
            if _run_has_read(instrs, start, end)
            and not _is_hint(instrs[start - 1].instr if start else None)
        ]

        read_counts: dict[int, int] = {}
        if need_hint:
            resolved = _resolve(instrs, labels)
            from . import refsim

            sim = refsim.simulate(resolved, max_steps=sim_limit)
            if sim.hit_limit:
                raise ProgramError(
                    f"readback-hint sizing exceeded {sim_limit} simulated "
                    "instructions; simplify control flow or add explicit HINTs"
                )
            read_counts = sim.reads_by_index

        insertions: list[tuple[int, int]] = []
        for start, end in need_hint:
            count = sum(read_counts.get(i, 0) for i in range(start, end + 1))
            if count > fifo_capacity:
                raise ReadRunExceedsFifo(
                    f"run at {start}..{end} issues {count} READs "
                    f"(> FIFO capacity {fifo_capacity})"
                )
            insertions.append((start, count))
        for item in instrs:
            if _is_hint(item.instr) and item.instr.imm > fifo_capacity:
                raise ReadRunExceedsFifo(
                    f"explicit hint {item.instr.imm} exceeds FIFO capacity "
                    f"{fifo_capacity}"
                )

        final: list[_Instr] = []
        pending = sorted(insertions)
        pi = 0
        for idx, item in enumerate(instrs):
            while pi < len(pending) and pending[pi][0] == idx:
                final.append(_Instr(RegularOp(RegularOpcode.HINT, imm=pending[pi][1])))
                pi += 1
            final.append(item)
        shifted_labels = {
            name: addr + sum(1 for pos, _ in insertions if pos <= addr)
            for name, addr in labels.items()
        }

        if len(final) > capacity:
            raise ProgramTooLarge(
                f"{len(final)} instructions exceed capacity {capacity}"
            )

        instructions = [it.instr for it in _resolve(final, shifted_labels)]
        words = [isa.encode(i) for i in instructions]
        hints = [
            (addr, instr.imm)
            for addr, instr in enumerate(instructions)
            if _is_hint(instr)
        ]
        return AssembledProgram(
            instructions=instructions,
            words=words,
            labels=shifted_labels,
            hints=hints,
        )


def _is_hint(instr: Instruction | None) -> bool:
    return isinstance(instr, RegularOp) and instr.opcode == RegularOpcode.HINT


def _layout(items) -> tuple[list[_Instr], dict[str, int]]:
    instrs: list[_Instr] = []
    labels: dict[str, int] = {}
    for item in items:
        if isinstance(item, _Label):
            labels[item.name] = len(instrs)
        else:
            instrs.append(item)
    return instrs, labels


def _resolve(instrs: list[_Instr], labels: dict[str, int]) -> list[_Instr]:
    out: list[_Instr] = []
    for item in instrs:
        if item.label_ref is None:
            out.append(item)
            continue
        if item.label_ref not in labels:
            raise UndefinedLabel(f"undefined label {item.label_ref!r}")
        op = item.instr
        assert isinstance(op, RegularOp)
        out.append(
            _Instr(
                RegularOp(op.opcode, rd=op.rd, rs1=op.rs1, rs2=op.rs2,
                          imm=labels[item.label_ref])
            )
        )
    return out


def _dram_runs(instrs: list[_Instr]) -> list[tuple[int, int]]:
    """Maximal spans of consecutive DRAM instructions (labels are not
    instructions and cannot break a span)."""
    runs = []
    start = None
    for idx, item in enumerate(instrs):
        if isinstance(item.instr, DramInstr):
            if start is None:
                start = idx
        elif start is not None:
            runs.append((start, idx - 1))
            start = None
    if start is not None:
        runs.append((start, len(instrs) - 1))
    return runs


def _run_has_read(instrs, start, end) -> bool:
    return any(
        slot.opcode == DramOpcode.READ
        for i in range(start, end + 1)
        for slot in instrs[i].instr.slots
    )


@dataclass
class AssembledProgram:
    """Label-resolved, hint-carrying instruction image."""

    instructions: list[Instruction]
    words: list[int]
    labels: dict[str, int]
    hints: list[tuple[int, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.instructions)

    def to_bytes(self) -> bytes:
        return isa.pack_image(self.words)

    def disassemble_text(self) -> str:
        return "\n".join(isa.disassemble(i) for i in self.instructions) + "\n"

    def command_histogram(self) -> Counter:
        """Static command counts by opcode name (NOPs excluded)."""
        hist: Counter = Counter()
        for instr in self.instructions:
            if isinstance(instr, DramInstr):
                for cmd in instr.commands:
                    hist[cmd.opcode.name] += 1
        return hist

    def dram_runs(self) -> list[tuple[int, int]]:
        return _dram_runs([_Instr(i) for i in self.instructions])


def load_image(blob: bytes, *, capacity: int = isa.INSTR_CAPACITY) -> AssembledProgram:
    """Decode a binary image back into an AssembledProgram."""
    words = isa.unpack_image(blob)
    if len(words) > capacity:
        raise ProgramTooLarge(f"{len(words)} instructions exceed capacity {capacity}")
    instructions = [isa.decode(w) for w in words]
    hints = [
        (addr, instr.imm)
        for addr, instr in enumerate(instructions)
        if _is_hint(instr)
    ]
    return AssembledProgram(
        instructions=instructions, words=list(words), labels={}, hints=hints
    )


# ---------------------------------------------------------------------------
# Builder scripts (JSON-friendly replay of append calls)

_SCRIPT_METHODS = {
    "LI": "append_li",
    "MV": "append_mv",
    "SRC": "append_src",
    "AND": "append_and",
    "OR": "append_or",
    "XOR": "append_xor",
    "ADD": "append_add",
    "SUB": "append_sub",
    "ADDI": "append_addi",
    "LD": "append_ld",
    "ST": "append_st",
    "BL": "append_bl",
    "BEQ": "append_beq",
    "JUMP": "append_jump",
    "SLEEP": "append_sleep",
    "LDWD": "append_ldwd",
    "LDPC": "append_ldpc",
    "SRE": "append_sre",
    "SRX": "append_srx",
    "END": "append_end",
    "HINT": "append_hint",
    "ACT": "append_act",
    "PRE": "append_pre",
    "PREA": "append_prea",
    "READ": "append_read",
    "WRITE": "append_write",
    "REF": "append_ref",
    "ZQS": "append_zqs",
    "NOPS": "append_nops",
    "LABEL": "append_label",
}


class BadScript(ProgramError):
    code = "BadScript"


def _script_arg(value):
    if isinstance(value, str):
        try:
            return isa.parse_reg(value)
        except isa.InvalidRegisterField:
            return value  # label name or immediate-form marker
    return value


def from_script(script: dict) -> Program:
    """Build a Program from a JSON-style description: a dict with an ``ops``
    list of {"op": NAME, "args": [...]} entries replaying append calls."""
    if not isinstance(script, dict) or "ops" not in script:
        raise BadScript("script must be an object with an 'ops' list")
    program = Program()
    for n, entry in enumerate(script["ops"]):
        op = entry.get("op") if isinstance(entry, dict) else None
        if op is None or op.upper() not in _SCRIPT_METHODS:
            raise BadScript(f"op #{n}: unknown builder op {op!r}")
        args = [_script_arg(a) for a in entry.get("args", [])]
        try:
            getattr(program, _SCRIPT_METHODS[op.upper()])(*args)
        except TypeError as exc:
            raise BadScript(f"op #{n} ({op}): {exc}") from None
    return program
