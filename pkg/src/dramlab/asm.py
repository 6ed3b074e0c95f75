"""Text assembly (.dbasm) parsing.

One instruction per line; `name:` lines bind labels; DRAM command slots are
joined with `|` (missing slots NOP-padded); `NOP4` is the all-idle
instruction; `#` starts a comment.  A `+` register suffix sets that operand's
auto-increment flag; trailing `AP` / `AUX` words set the remaining flags.
Immediates are decimal or 0x-hex; branch targets are labels or absolute
instruction addresses.
"""

from __future__ import annotations

import re

from . import isa
from .builder import DuplicateLabel, Program
from .isa import (
    DRAM_OPERANDS,
    REGULAR_OPERANDS,
    DramCommand,
    DramInstr,
    DramOpcode,
    Instruction,
    RegularOp,
    RegularOpcode,
)


class AsmSyntaxError(Exception):
    code = "SyntaxError"

    def __init__(self, message: str, line: int = 0, col: int = 0) -> None:
        super().__init__(f"line {line}:{col}: {message}" if line else message)
        self.line = line
        self.col = col


class UnknownMnemonic(AsmSyntaxError):
    code = "UnknownMnemonic"


_LABEL_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*):$")
_TOKEN_RE = re.compile(r"[A-Za-z0-9_+\-x]+|,")

_DRAM_MNEMONICS = {op.name: op for op in DramOpcode}


def _parse_int(token: str, line: int) -> int:
    try:
        return int(token, 0)
    except ValueError:
        raise AsmSyntaxError(f"expected integer, got {token!r}", line) from None


def _parse_reg_token(token: str, line: int) -> tuple[int, bool]:
    inc = token.endswith("+")
    name = token[:-1] if inc else token
    try:
        return int(isa.parse_reg(name)), inc
    except isa.InvalidRegisterField as exc:
        raise AsmSyntaxError(str(exc), line) from None


def _parse_command(text: str, line: int) -> DramCommand:
    tokens = [t for t in _TOKEN_RE.findall(text) if t != ","]
    if not tokens:
        raise AsmSyntaxError("empty command slot", line)
    mnem = tokens[0]
    if mnem not in _DRAM_MNEMONICS:
        raise UnknownMnemonic(f"unknown DRAM command {mnem!r}", line)
    opcode = _DRAM_MNEMONICS[mnem]
    shape = DRAM_OPERANDS[opcode]
    regs: list[tuple[int, bool]] = []
    auto_precharge = aux = False
    for token in tokens[1:]:
        if token == "AP":
            auto_precharge = True
        elif token == "AUX":
            aux = True
        else:
            regs.append(_parse_reg_token(token, line))
    if len(regs) != len(shape):
        raise AsmSyntaxError(
            f"{mnem} takes {len(shape)} register operand(s), got {len(regs)}", line
        )
    fields = {}
    for kind, (reg, inc) in zip(shape, regs):
        if kind == "a":
            fields.update(reg_a=reg, inc_a=inc)
        else:
            fields.update(reg_b=reg, inc_b=inc)
    return DramCommand(opcode, auto_precharge=auto_precharge, aux=aux, **fields)


def _split_operands(text: str, line: int) -> list[str]:
    parts = [p.strip() for p in text.split(",")] if text.strip() else []
    if any(not p for p in parts):
        raise AsmSyntaxError("empty operand", line)
    return parts


def _parse_regular(
    mnem: str, operand_text: str, line: int, allow_labels: bool
) -> tuple[RegularOp, str | None]:
    opcode = RegularOpcode[mnem]
    shape = REGULAR_OPERANDS[opcode]
    operands = _split_operands(operand_text, line)
    # trailing immediate of LD/ST may be omitted
    optional_tail = shape.endswith("i") and opcode in (
        RegularOpcode.LD,
        RegularOpcode.ST,
    )
    if len(operands) != len(shape) and not (
        optional_tail and len(operands) == len(shape) - 1
    ):
        raise AsmSyntaxError(
            f"{mnem} takes {len(shape)} operand(s), got {len(operands)}", line
        )
    fields = {"rd": 0, "rs1": 0, "rs2": 0, "imm": 0}
    label_ref: str | None = None
    for kind, token in zip(shape, operands):
        if kind in "d12":
            reg, inc = _parse_reg_token(token, line)
            if inc:
                raise AsmSyntaxError("'+' is only valid on DRAM command operands", line)
            fields[{"d": "rd", "1": "rs1", "2": "rs2"}[kind]] = reg
        elif kind == "i":
            fields["imm"] = _parse_int(token, line)
        elif kind == "t":
            if re.fullmatch(r"-?\d+|0x[0-9A-Fa-f]+", token):
                fields["imm"] = _parse_int(token, line)
            elif allow_labels:
                label_ref = token
            else:
                raise AsmSyntaxError(f"label target {token!r} needs program context", line)
        elif kind == "k":
            fields["rd"] = _parse_int(token, line)
        elif kind == "c":
            fields["imm"] = _parse_int(token, line)
    return RegularOp(opcode, **fields), label_ref


def _parse_line(text: str, line: int, allow_labels: bool) -> tuple[Instruction, str | None]:
    text = text.strip()
    if text == "NOP4":
        return isa.NOP4, None
    mnem = text.split(None, 1)[0].split(",")[0].split("|")[0].strip()
    if mnem in _DRAM_MNEMONICS:
        parts = text.split("|")
        if len(parts) > isa.SLOTS_PER_INSTR:
            raise AsmSyntaxError(
                f"at most {isa.SLOTS_PER_INSTR} command slots per instruction", line
            )
        return DramInstr(tuple(_parse_command(p, line) for p in parts)), None
    if mnem in RegularOpcode.__members__:
        rest = text[len(mnem):].strip()
        return _parse_regular(mnem, rest, line, allow_labels)
    raise UnknownMnemonic(f"unknown mnemonic {mnem!r}", line)


def parse_instruction(text: str) -> Instruction:
    """Parse a single instruction line (no label context)."""
    return _parse_line(text, 0, allow_labels=False)[0]


def parse_assembly(text: str) -> Program:
    """Parse .dbasm text into a Program (labels unresolved until assemble)."""
    program = Program()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        label = _LABEL_RE.match(stripped)
        if label:
            try:
                program.append_label(label.group(1))
            except DuplicateLabel as exc:
                raise DuplicateLabel(f"line {line_no}: {exc}") from None
            continue
        instr, label_ref = _parse_line(stripped, line_no, allow_labels=True)
        program.append_instr(instr, label_ref)
    return program
