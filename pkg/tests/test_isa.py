"""Encoding/decoding oracles for the 72-bit instruction word."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dramlab import isa
from dramlab.isa import (
    NOP,
    BadMagic,
    DramCommand,
    DramInstr,
    DramOpcode,
    ImmOverflow,
    InvalidRegisterField,
    Register,
    RegularOp,
    RegularOpcode,
    UnknownOpcode,
    decode,
    disassemble,
    encode,
    pack_image,
    unpack_image,
)

# Hand-computed word images.  Slot 0 occupies bits [71:54]; within a slot the
# opcode sits at [17:14], reg_a at [13:10], reg_b at [9:6], flags at [5:2].
ACT_5_4_WORD = 0x154000000000000000
MIXED_WORD = 0x112008C004456159C4
LI_R6_1024 = 0xF2D800000010000000
BL_9_R3_R6 = 0xF300D8000000240000
LI_R0_NEG1 = 0xF2C003FFFFFFFC0000
SLEEP_100 = 0xF3C000000001900000
END_WORD = 0xF50000000000000000
HINT_128 = 0xFF8000000002000000


def test_act_slot_encoding():
    cmd = DramCommand(DramOpcode.ACT, reg_a=5, reg_b=4)
    assert cmd.encode_slot() == 0x05500
    assert encode(DramInstr((cmd,))) == ACT_5_4_WORD


def test_read_slot_with_increment():
    cmd = DramCommand(DramOpcode.READ, reg_a=5, reg_b=3, inc_b=True)
    assert cmd.encode_slot() == 0x114D0


def test_all_nop_word_is_zero():
    assert encode(DramInstr(())) == 0
    assert encode(isa.NOP4) == 0
    assert decode(0) == isa.NOP4


def test_four_slot_packing_order():
    instr = DramInstr((
        DramCommand(DramOpcode.ACT, reg_a=1, reg_b=2),
        DramCommand(DramOpcode.PRE, reg_a=3),
        DramCommand(DramOpcode.READ, reg_a=4, reg_b=5, inc_b=True, auto_precharge=True),
        DramCommand(DramOpcode.WRITE, reg_a=6, reg_b=7, aux=True),
    ))
    assert encode(instr) == MIXED_WORD
    assert decode(MIXED_WORD) == instr


def test_short_slot_tuple_pads_with_nops():
    instr = DramInstr((DramCommand(DramOpcode.ACT, reg_a=5, reg_b=4),))
    assert len(instr.slots) == 4
    assert instr.slots[1:] == (NOP, NOP, NOP)
    assert instr.commands == [DramCommand(DramOpcode.ACT, reg_a=5, reg_b=4)]


def test_regular_field_placement():
    assert encode(RegularOp(RegularOpcode.LI, rd=6, imm=1024)) == LI_R6_1024
    assert encode(RegularOp(RegularOpcode.BL, rs1=3, rs2=6, imm=9)) == BL_9_R3_R6
    assert encode(RegularOp(RegularOpcode.SLEEP, imm=100)) == SLEEP_100
    assert encode(RegularOp(RegularOpcode.END)) == END_WORD
    assert encode(RegularOp(RegularOpcode.HINT, imm=128)) == HINT_128


def test_negative_immediate_normalizes_to_unsigned():
    op = RegularOp(RegularOpcode.LI, rd=0, imm=-1)
    assert op.imm == 0xFFFFFFFF
    assert op.imm_signed == -1
    assert encode(op) == LI_R0_NEG1
    assert decode(LI_R0_NEG1) == op


def test_immediate_bounds():
    RegularOp(RegularOpcode.LI, imm=0xFFFFFFFF)
    RegularOp(RegularOpcode.LI, imm=-(1 << 31))
    with pytest.raises(ImmOverflow):
        RegularOp(RegularOpcode.LI, imm=1 << 32)
    with pytest.raises(ImmOverflow):
        RegularOp(RegularOpcode.LI, imm=-(1 << 31) - 1)


def test_register_field_bounds():
    with pytest.raises(InvalidRegisterField):
        DramCommand(DramOpcode.ACT, reg_a=16)
    with pytest.raises(InvalidRegisterField):
        RegularOp(RegularOpcode.MV, rd=Register.WDR)
    with pytest.raises(InvalidRegisterField):
        RegularOp(RegularOpcode.ADD, rs2=-1)


def test_reserved_dram_opcodes_raise():
    for code in range(0x8, 0xF):
        with pytest.raises(UnknownOpcode):
            decode(code << 14 << 54)


def test_reserved_regular_opcodes_raise():
    # 0..texture of the 6-bit space: anything outside the defined set traps
    defined = {int(op) for op in RegularOpcode}
    for code in (0, 21, 0x3D, 0x3F):
        assert code not in defined
        with pytest.raises(UnknownOpcode):
            decode((0xF << 68) | (code << 62))


def test_nop_slot_ignores_payload_bits():
    # opcode 0 with garbage register/flag bits still decodes as plain NOP
    raw = (0x0 << 14) | (7 << 10) | (3 << 6) | (0xF << 2)
    word = raw << 54
    assert decode(word) == isa.NOP4


def test_word_out_of_range_rejected():
    with pytest.raises(UnknownOpcode):
        decode(1 << 72)
    with pytest.raises(UnknownOpcode):
        decode(-1)


@settings(max_examples=200)
@given(
    st.lists(
        st.tuples(
            st.sampled_from(sorted(DramOpcode)),
            st.integers(0, 15),
            st.integers(0, 15),
            st.booleans(),
            st.booleans(),
            st.booleans(),
            st.booleans(),
        ),
        max_size=4,
    )
)
def test_dram_roundtrip(specs):
    instr = DramInstr(tuple(DramCommand(*s) for s in specs))
    word = encode(instr)
    assert 0 <= word < (1 << 72)
    back = decode(word)
    if isinstance(back, DramInstr):
        # NOP payload bits are not representable, so compare slot-by-slot
        for mine, theirs in zip(instr.slots, back.slots):
            if mine.opcode == DramOpcode.NOP:
                assert theirs == NOP
            else:
                assert theirs == mine
    else:
        # a slot-0 opcode of 0xF cannot come out of DramCommand
        raise AssertionError("DRAM word decoded as regular")


@settings(max_examples=200)
@given(
    op=st.sampled_from(sorted(RegularOpcode)),
    rd=st.integers(0, 15),
    rs1=st.integers(0, 15),
    rs2=st.integers(0, 15),
    imm=st.integers(0, 0xFFFFFFFF),
)
def test_regular_roundtrip(op, rd, rs1, rs2, imm):
    instr = RegularOp(op, rd=rd, rs1=rs1, rs2=rs2, imm=imm)
    assert decode(encode(instr)) == instr


def test_roundtrip_census():
    # 10k deterministic pseudo-random words, mixed kinds, in one pass
    import random

    rng = random.Random(0xDB)
    regular_codes = sorted(int(op) for op in RegularOpcode)
    count = 0
    for _ in range(10_000):
        if rng.random() < 0.5:
            # NOP slots must stay payload-free: decode canonicalizes them
            instr = DramInstr(tuple(
                NOP if op == DramOpcode.NOP else DramCommand(
                    op,
                    reg_a=rng.randrange(16),
                    reg_b=rng.randrange(16),
                    inc_a=rng.random() < 0.3,
                    inc_b=rng.random() < 0.3,
                    auto_precharge=rng.random() < 0.1,
                    aux=rng.random() < 0.1,
                )
                for op in (rng.choice(sorted(DramOpcode)) for _ in range(rng.randrange(5)))
            ))
        else:
            instr = RegularOp(
                RegularOpcode(rng.choice(regular_codes)),
                rd=rng.randrange(16),
                rs1=rng.randrange(16),
                rs2=rng.randrange(16),
                imm=rng.randrange(1 << 32),
            )
        word = encode(instr)
        back = decode(word)
        assert encode(back) == word
        count += 1
    assert count == 10_000


class TestImageFormat:
    def test_header_layout(self):
        blob = pack_image([ACT_5_4_WORD, END_WORD])
        assert blob[:8] == b"DBND0001"
        assert blob[8:12] == (2).to_bytes(4, "little")
        assert len(blob) == 12 + 2 * 9

    def test_little_endian_word_bytes(self):
        blob = pack_image([0x0102030405060708A9])
        assert blob[12:21] == bytes([0xA9, 0x08, 0x07, 0x06, 0x05, 0x04, 0x03, 0x02, 0x01])

    def test_roundtrip(self):
        words = [ACT_5_4_WORD, MIXED_WORD, LI_R6_1024, END_WORD]
        assert unpack_image(pack_image(words)) == words

    def test_bad_magic(self):
        blob = pack_image([END_WORD])
        with pytest.raises(BadMagic):
            unpack_image(b"XXXX0001" + blob[8:])

    def test_truncated_image(self):
        blob = pack_image([ACT_5_4_WORD, END_WORD])
        with pytest.raises(BadMagic):
            unpack_image(blob[:-1])

    def test_empty_image(self):
        assert unpack_image(pack_image([])) == []


def test_disassembly_is_canonical():
    cases = {
        ACT_5_4_WORD: "ACT R5, R4 | NOP | NOP | NOP",
        LI_R6_1024: "LI R6, 1024",
        BL_9_R3_R6: "BL 9, R3, R6",
        END_WORD: "END",
        0: "NOP4",
    }
    for word, text in cases.items():
        assert disassemble(decode(word)) == text


def test_format_flags_spelled_out():
    cmd = DramCommand(DramOpcode.READ, reg_a=2, reg_b=3, inc_b=True,
                      auto_precharge=True)
    assert isa.format_command(cmd) == "READ R2, R3+ AP"
    cmd = DramCommand(DramOpcode.WRITE, reg_a=0, reg_b=1, aux=True)
    assert isa.format_command(cmd) == "WRITE R0, R1 AUX"


def test_ldwd_rd_is_slice_index():
    op = RegularOp(RegularOpcode.LDWD, rd=13, rs1=2)
    assert isa.format_regular(op) == "LDWD 13, R2"


def test_perf_counter_names_stable():
    assert isa.PERF_COUNTERS == (
        "cycles",
        "acts_issued",
        "reads_issued",
        "writes_issued",
        "pres_issued",
        "refs_issued",
    )
