"""Instruction set: 72-bit wide words holding either four 18-bit DRAM command
slots or one register-file ("regular") instruction, plus the binary program
container format.

Bit layout (MSB-first):
  word[71:54] = slot 0, word[53:36] = slot 1, word[35:18] = slot 2, word[17:0] = slot 3
  slot        = opcode[17:14] | reg_a[13:10] | reg_b[9:6] | flags[5:2] | reserved[1:0]
  flags       = inc_a, inc_b, auto_precharge, aux (high to low)

A slot-0 opcode of 0xF escapes to the regular layout:
  word = 0xF[71:68] | opcode[67:62] | rd[61:58] | rs1[57:54] | rs2[53:50]
         | imm[49:18] | zero[17:0]
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

WORD_BITS = 72
WORD_BYTES = 9
IMM_BITS = 32
IMM_MASK = (1 << IMM_BITS) - 1
SLOTS_PER_INSTR = 4

MAGIC = b"DBND0001"

# Architectural constants.
GPR_COUNT = 13  # R0..R12
SCRATCHPAD_WORDS = 1024
INSTR_CAPACITY = 2048
FIFO_CAPACITY = 512
TRANSFER_BITS = 512
TRANSFER_BYTES = TRANSFER_BITS // 8
WDR_SLICES = 16  # 16 x 32-bit slices make up the 512-bit write-data register


class Register(enum.IntEnum):
    """Register file ids: 13 GPRs, three stride registers, and the wide
    write-data register (WDR, reachable only through LDWD)."""

    R0 = 0
    R1 = 1
    R2 = 2
    R3 = 3
    R4 = 4
    R5 = 5
    R6 = 6
    R7 = 7
    R8 = 8
    R9 = 9
    R10 = 10
    R11 = 11
    R12 = 12
    BASR = 13
    RASR = 14
    CASR = 15
    WDR = 16


#: R12 is used by the assembler to materialize immediate comparison operands.
RESERVED_TEMP = Register.R12


class DramOpcode(enum.IntEnum):
    NOP = 0x0
    ACT = 0x1
    PRE = 0x2
    PREA = 0x3
    READ = 0x4
    WRITE = 0x5
    REF = 0x6
    ZQS = 0x7
    # 0x8..0xE reserved, 0xF escapes to the regular layout.


REGULAR_ESCAPE = 0xF


class RegularOpcode(enum.IntEnum):
    LD = 1
    ST = 2
    AND = 3
    OR = 4
    XOR = 5
    ADD = 6
    SUB = 7
    ADDI = 8
    MV = 9
    SRC = 10
    LI = 11
    BL = 12
    BEQ = 13
    JUMP = 14
    SLEEP = 15
    LDWD = 16
    LDPC = 17
    SRE = 18
    SRX = 19
    END = 20
    HINT = 0x3E  # readback-hint pseudo-instruction inserted by the assembler


BRANCH_OPCODES = frozenset(
    {RegularOpcode.BL, RegularOpcode.BEQ, RegularOpcode.JUMP}
)

#: Performance counter ids readable via LDPC.
PERF_COUNTERS = (
    "cycles",
    "acts_issued",
    "reads_issued",
    "writes_issued",
    "pres_issued",
    "refs_issued",
)


class IsaError(Exception):
    """Base class for encoding/decoding/text errors."""

    #: short stable identifier used by the CLI JSON error output
    code = "IsaError"


class InvalidRegisterField(IsaError):
    code = "InvalidRegisterField"


class ImmOverflow(IsaError):
    code = "ImmOverflow"


class UnknownOpcode(IsaError):
    code = "UnknownOpcode"


class BadMagic(IsaError):
    code = "BadMagic"


def _check_reg_field(value: int, what: str) -> int:
    value = int(value)
    if not 0 <= value <= 15:
        raise InvalidRegisterField(
            f"{what} must encode to 4 bits (0..15), got {value}"
            + (" (WDR is addressable only by LDWD)" if value == Register.WDR else "")
        )
    return value


def _norm_imm(value: int) -> int:
    value = int(value)
    if not -(1 << (IMM_BITS - 1)) <= value <= IMM_MASK:
        raise ImmOverflow(f"immediate {value} does not fit in {IMM_BITS} bits")
    return value & IMM_MASK


@dataclass(frozen=True)
class DramCommand:
    """One 18-bit command slot."""

    opcode: DramOpcode
    reg_a: int = 0
    reg_b: int = 0
    inc_a: bool = False
    inc_b: bool = False
    auto_precharge: bool = False
    aux: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "opcode", DramOpcode(self.opcode))
        object.__setattr__(self, "reg_a", _check_reg_field(self.reg_a, "reg_a"))
        object.__setattr__(self, "reg_b", _check_reg_field(self.reg_b, "reg_b"))
        for flag in ("inc_a", "inc_b", "auto_precharge", "aux"):
            object.__setattr__(self, flag, bool(getattr(self, flag)))

    def encode_slot(self) -> int:
        flags = (
            (self.inc_a << 3)
            | (self.inc_b << 2)
            | (self.auto_precharge << 1)
            | int(self.aux)
        )
        return (int(self.opcode) << 14) | (self.reg_a << 10) | (self.reg_b << 6) | (flags << 2)


NOP = DramCommand(DramOpcode.NOP)


@dataclass(frozen=True)
class DramInstr:
    """Four command slots issued on consecutive bus slots."""

    slots: tuple[DramCommand, ...]

    def __post_init__(self) -> None:
        slots = tuple(self.slots)
        if len(slots) > SLOTS_PER_INSTR:
            raise ValueError(f"at most {SLOTS_PER_INSTR} slots, got {len(slots)}")
        slots = slots + (NOP,) * (SLOTS_PER_INSTR - len(slots))
        object.__setattr__(self, "slots", slots)

    @property
    def commands(self) -> list[DramCommand]:
        """Non-NOP slots, in issue order."""
        return [c for c in self.slots if c.opcode != DramOpcode.NOP]


NOP4 = DramInstr((NOP, NOP, NOP, NOP))


@dataclass(frozen=True)
class RegularOp:
    """A register-file instruction.

    For LDWD the rd field carries the 32-bit WDR slice index (the destination
    is implicitly WDR); for LDPC the imm field carries the counter id.
    """

    opcode: RegularOpcode
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    imm: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "opcode", RegularOpcode(self.opcode))
        object.__setattr__(self, "rd", _check_reg_field(self.rd, "rd"))
        object.__setattr__(self, "rs1", _check_reg_field(self.rs1, "rs1"))
        object.__setattr__(self, "rs2", _check_reg_field(self.rs2, "rs2"))
        object.__setattr__(self, "imm", _norm_imm(self.imm))

    @property
    def imm_signed(self) -> int:
        return self.imm - (1 << IMM_BITS) if self.imm >> (IMM_BITS - 1) else self.imm


Instruction = DramInstr | RegularOp


def encode(instr: Instruction) -> int:
    """Encode an instruction into its 72-bit word."""
    if isinstance(instr, RegularOp):
        return (
            (REGULAR_ESCAPE << 68)
            | (int(instr.opcode) << 62)
            | (instr.rd << 58)
            | (instr.rs1 << 54)
            | (instr.rs2 << 50)
            | (instr.imm << 18)
        )
    word = 0
    for slot in instr.slots:
        word = (word << 18) | slot.encode_slot()
    return word


def _decode_slot(raw: int) -> DramCommand:
    opcode = (raw >> 14) & 0xF
    try:
        op = DramOpcode(opcode)
    except ValueError:
        raise UnknownOpcode(f"reserved DRAM opcode 0x{opcode:X}") from None
    if op == DramOpcode.NOP:
        return NOP  # NOP ignores all payload bits
    flags = (raw >> 2) & 0xF
    return DramCommand(
        op,
        reg_a=(raw >> 10) & 0xF,
        reg_b=(raw >> 6) & 0xF,
        inc_a=bool(flags & 0x8),
        inc_b=bool(flags & 0x4),
        auto_precharge=bool(flags & 0x2),
        aux=bool(flags & 0x1),
    )


def decode(word: int) -> Instruction:
    """Decode a 72-bit word; raises UnknownOpcode on reserved code points."""
    if not 0 <= word < (1 << WORD_BITS):
        raise UnknownOpcode(f"word does not fit in {WORD_BITS} bits")
    if (word >> 68) & 0xF == REGULAR_ESCAPE:
        opcode = (word >> 62) & 0x3F
        try:
            op = RegularOpcode(opcode)
        except ValueError:
            raise UnknownOpcode(f"reserved regular opcode 0x{opcode:02X}") from None
        return RegularOp(
            op,
            rd=(word >> 58) & 0xF,
            rs1=(word >> 54) & 0xF,
            rs2=(word >> 50) & 0xF,
            imm=(word >> 18) & IMM_MASK,
        )
    slots = tuple(
        _decode_slot((word >> shift) & 0x3FFFF) for shift in (54, 36, 18, 0)
    )
    return DramInstr(slots)


# ---------------------------------------------------------------------------
# Binary program container


def pack_image(words: list[int]) -> bytes:
    """Serialize encoded words: magic, little-endian u32 count, then 9 bytes
    per instruction with instruction bit 0 in bit 0 of the first byte."""
    out = bytearray(MAGIC)
    out += len(words).to_bytes(4, "little")
    for word in words:
        out += word.to_bytes(WORD_BYTES, "little")
    return bytes(out)


def unpack_image(blob: bytes) -> list[int]:
    if blob[:8] != MAGIC:
        raise BadMagic(f"bad magic {blob[:8]!r}")
    count = int.from_bytes(blob[8:12], "little")
    expected = 12 + count * WORD_BYTES
    if len(blob) != expected:
        raise BadMagic(f"image length {len(blob)} != expected {expected}")
    return [
        int.from_bytes(blob[12 + i * WORD_BYTES : 12 + (i + 1) * WORD_BYTES], "little")
        for i in range(count)
    ]


# ---------------------------------------------------------------------------
# Textual forms

_REG_NAMES = {r: r.name for r in Register if r != Register.WDR}
_NAME_REGS = {name: r for r, name in _REG_NAMES.items()}


def reg_name(idx: int) -> str:
    return _REG_NAMES[Register(idx)]


def parse_reg(token: str) -> Register:
    try:
        return _NAME_REGS[token]
    except KeyError:
        raise InvalidRegisterField(f"unknown register {token!r}") from None


def _fmt_dram_operand(reg: int, inc: bool) -> str:
    return reg_name(reg) + ("+" if inc else "")


#: operand shapes: which fields each DRAM opcode uses
DRAM_OPERANDS = {
    DramOpcode.NOP: (),
    DramOpcode.ACT: ("a", "b"),
    DramOpcode.PRE: ("a",),
    DramOpcode.PREA: (),
    DramOpcode.READ: ("a", "b"),
    DramOpcode.WRITE: ("a", "b"),
    DramOpcode.REF: (),
    DramOpcode.ZQS: (),
}


def format_command(cmd: DramCommand) -> str:
    parts = [cmd.opcode.name]
    operands = []
    shape = DRAM_OPERANDS[cmd.opcode]
    if "a" in shape:
        operands.append(_fmt_dram_operand(cmd.reg_a, cmd.inc_a))
    if "b" in shape:
        operands.append(_fmt_dram_operand(cmd.reg_b, cmd.inc_b))
    if operands:
        parts.append(", ".join(operands))
    if cmd.auto_precharge:
        parts.append("AP")
    if cmd.aux:
        parts.append("AUX")
    return " ".join(parts)


#: regular operand shapes: sequence of field kinds
#:   d=rd register, 1=rs1 register, 2=rs2 register, i=immediate,
#:   t=immediate branch target, k=rd as plain integer (LDWD slice),
#:   c=imm as plain integer (LDPC counter id)
REGULAR_OPERANDS = {
    RegularOpcode.LD: "d1i",
    RegularOpcode.ST: "21i",
    RegularOpcode.AND: "d12",
    RegularOpcode.OR: "d12",
    RegularOpcode.XOR: "d12",
    RegularOpcode.ADD: "d12",
    RegularOpcode.SUB: "d12",
    RegularOpcode.ADDI: "d1i",
    RegularOpcode.MV: "d1",
    RegularOpcode.SRC: "d1",
    RegularOpcode.LI: "di",
    RegularOpcode.BL: "t12",
    RegularOpcode.BEQ: "t12",
    RegularOpcode.JUMP: "t",
    RegularOpcode.SLEEP: "i",
    RegularOpcode.LDWD: "k1",
    RegularOpcode.LDPC: "dc",
    RegularOpcode.SRE: "",
    RegularOpcode.SRX: "",
    RegularOpcode.END: "",
    RegularOpcode.HINT: "i",
}


def format_regular(op: RegularOp) -> str:
    operands = []
    for kind in REGULAR_OPERANDS[op.opcode]:
        if kind == "d":
            operands.append(reg_name(op.rd))
        elif kind == "1":
            operands.append(reg_name(op.rs1))
        elif kind == "2":
            operands.append(reg_name(op.rs2))
        elif kind in "it":
            operands.append(str(op.imm_signed))
        elif kind == "k":
            operands.append(str(op.rd))
        elif kind == "c":
            operands.append(str(op.imm))
    if operands:
        return f"{op.opcode.name} {', '.join(operands)}"
    return op.opcode.name


def disassemble(instr: Instruction) -> str:
    """One canonical text line for an instruction."""
    if isinstance(instr, RegularOp):
        return format_regular(instr)
    if all(c.opcode == DramOpcode.NOP for c in instr.slots):
        return "NOP4"
    return " | ".join(format_command(c) for c in instr.slots)
