"""Text (.dbasm) parsing tests."""

import pytest

from dramlab import isa
from dramlab.asm import AsmSyntaxError, UnknownMnemonic, parse_assembly, parse_instruction
from dramlab.builder import DuplicateLabel
from dramlab.isa import (
    DramCommand,
    DramInstr,
    DramOpcode,
    Register as R,
    RegularOp,
    RegularOpcode,
    disassemble,
)


def test_single_command_line():
    instr = parse_instruction("ACT R5, R4")
    assert instr == DramInstr((DramCommand(DramOpcode.ACT, reg_a=5, reg_b=4),))


def test_pipe_joined_slots():
    instr = parse_instruction("ACT R5, R4 | PRE R5 | NOP | REF")
    assert [c.opcode.name for c in instr.slots] == ["ACT", "PRE", "NOP", "REF"]


def test_increment_suffix():
    instr = parse_instruction("READ R5, R3+")
    cmd = instr.slots[0]
    assert cmd.inc_b and not cmd.inc_a


def test_flag_words():
    cmd = parse_instruction("READ R1, R2 AP AUX").slots[0]
    assert cmd.auto_precharge and cmd.aux
    cmd = parse_instruction("WRITE R1, R2 AUX").slots[0]
    assert cmd.aux and not cmd.auto_precharge


def test_nop4():
    assert parse_instruction("NOP4") == isa.NOP4
    assert parse_instruction("NOP | NOP | NOP | NOP") == isa.NOP4


def test_regular_forms():
    assert parse_instruction("LI CASR, 8") == RegularOp(
        RegularOpcode.LI, rd=R.CASR, imm=8
    )
    assert parse_instruction("ADDI R2, R2, 1") == RegularOp(
        RegularOpcode.ADDI, rd=2, rs1=2, imm=1
    )
    assert parse_instruction("AND R1, R2, R3") == RegularOp(
        RegularOpcode.AND, rd=1, rs1=2, rs2=3
    )
    assert parse_instruction("END") == RegularOp(RegularOpcode.END)
    assert parse_instruction("LDWD 13, R2") == RegularOp(
        RegularOpcode.LDWD, rd=13, rs1=2
    )


def test_immediate_radixes():
    assert parse_instruction("LI R1, 0x40").imm == 64
    assert parse_instruction("LI R1, -2").imm == 0xFFFFFFFE
    assert parse_instruction("SLEEP 1000").imm == 1000


def test_numeric_branch_target():
    op = parse_instruction("BL 9, R3, R6")
    assert op == RegularOp(RegularOpcode.BL, rs1=3, rs2=6, imm=9)


def test_label_target_needs_program_context():
    with pytest.raises(AsmSyntaxError):
        parse_instruction("BL read, R3, R6")


def test_ld_st_optional_offset():
    assert parse_instruction("LD R1, R2") == RegularOp(
        RegularOpcode.LD, rd=1, rs1=2, imm=0
    )
    assert parse_instruction("LD R1, R2, 5") == RegularOp(
        RegularOpcode.LD, rd=1, rs1=2, imm=5
    )
    # ST source, address: rs2 carries the stored value
    assert parse_instruction("ST R7, R2, 5") == RegularOp(
        RegularOpcode.ST, rs1=2, rs2=7, imm=5
    )


class TestErrors:
    def test_unknown_mnemonic(self):
        with pytest.raises(UnknownMnemonic):
            parse_instruction("FROB R1")

    def test_unknown_register(self):
        with pytest.raises(AsmSyntaxError):
            parse_instruction("LI R99, 0")

    def test_wdr_not_directly_addressable(self):
        with pytest.raises(AsmSyntaxError):
            parse_instruction("MV WDR, R1")

    def test_arity_errors(self):
        with pytest.raises(AsmSyntaxError):
            parse_instruction("ACT R5")
        with pytest.raises(AsmSyntaxError):
            parse_instruction("LI R1")
        with pytest.raises(AsmSyntaxError):
            parse_instruction("MV R1, R2, R3")

    def test_too_many_slots(self):
        with pytest.raises(AsmSyntaxError):
            parse_instruction("NOP | NOP | NOP | NOP | NOP")

    def test_increment_on_regular_operand(self):
        with pytest.raises(AsmSyntaxError):
            parse_instruction("MV R1+, R2")

    def test_empty_operand(self):
        with pytest.raises(AsmSyntaxError):
            parse_instruction("LI R1,")

    def test_error_carries_line_number(self):
        text = "LI R1, 0\nFROB R9\n"
        with pytest.raises(AsmSyntaxError) as exc_info:
            parse_assembly(text)
        assert exc_info.value.line == 2
        assert "line 2" in str(exc_info.value)

    def test_duplicate_label_line(self):
        with pytest.raises(DuplicateLabel) as exc_info:
            parse_assembly("x:\nLI R1, 0\nx:\n")
        assert "line 3" in str(exc_info.value)


def test_comments_and_blank_lines():
    prog = parse_assembly(
        """
        # leading comment
        LI R1, 4   # trailing comment

        END
        """
    )
    out = prog.assemble()
    assert len(out) == 2


def test_forward_label_reference():
    prog = parse_assembly(
        """
        JUMP done
        LI R1, 1
        done:
        END
        """
    )
    out = prog.assemble()
    assert out.instructions[0].imm == 2
    assert out.labels == {"done": 2}


def test_parse_disassemble_closure():
    # every canonical disassembly line parses back to the same instruction
    samples = [
        DramInstr((DramCommand(DramOpcode.ACT, reg_a=5, reg_b=4),)),
        DramInstr((
            DramCommand(DramOpcode.READ, reg_a=1, reg_b=3, inc_b=True, auto_precharge=True),
            DramCommand(DramOpcode.WRITE, reg_a=2, reg_b=4, inc_a=True, aux=True),
            DramCommand(DramOpcode.ZQS),
            DramCommand(DramOpcode.PREA),
        )),
        isa.NOP4,
        RegularOp(RegularOpcode.LI, rd=R.BASR, imm=123456),
        RegularOp(RegularOpcode.LI, rd=0, imm=-7),
        RegularOp(RegularOpcode.BL, rs1=3, rs2=6, imm=9),
        RegularOp(RegularOpcode.LDPC, rd=2, imm=1),
        RegularOp(RegularOpcode.LDWD, rd=15, rs1=0),
        RegularOp(RegularOpcode.SRE),
        RegularOp(RegularOpcode.HINT, imm=128),
    ]
    for instr in samples:
        assert parse_instruction(disassemble(instr)) == instr


def test_assembled_image_disassembles_and_reparses_identically():
    from dramlab.programs import column_sweep_read

    out = column_sweep_read().assemble()
    text = out.disassemble_text()
    # the disassembly of an assembled image already carries its hints and a
    # trailing END, so reassembling it must not add anything
    again = parse_assembly(text).assemble()
    assert again.to_bytes() == out.to_bytes()
