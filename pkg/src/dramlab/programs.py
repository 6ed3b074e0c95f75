"""Canonical test-program shapes used by the case studies, the docs, and the
test-suite: a column read sweep, a double-sided activation hammer iteration,
and the back-to-back activation kernel for in-array majority operations."""

from __future__ import annotations

from .builder import Program
from .isa import Register as R


def column_sweep_read(
    bank: int = 0,
    row: int = 0,
    col_limit: int = 1024,
    col_stride: int = 8,
    act_delay_slots: int = 11,
) -> Program:
    """Activate one row and read every ``col_stride``-th column address up to
    ``col_limit``, then precharge."""
    p = Program()
    p.append_li(R.R5, bank)
    p.append_li(R.R4, row)
    p.append_li(R.R3, 0)
    p.append_li(R.CASR, col_stride)
    p.append_li(R.R6, col_limit)
    p.append_act(R.R5, False, R.R4, False, delay=act_delay_slots)
    p.append_label("read")
    p.append_read(R.R5, False, R.R3, True, False, False, delay=0)
    p.append_bl("read", R.R3, R.R6)
    p.append_pre(R.R5, False, False, delay=0)
    return p


def hammer_pair_iteration(
    bank: int,
    row_a: int,
    row_b: int,
    acts_per_side: int,
    act_delay_slots: int = 21,
    pre_delay_slots: int = 8,
) -> Program:
    """One double-sided hammer iteration: ``acts_per_side`` ACT/PRE pairs to
    ``row_a``, then the same count to ``row_b``.  Loop bounds use the
    immediate comparison form (materialized through R12)."""
    p = Program()
    p.append_li(R.R1, bank)
    p.append_li(R.R3, row_a)
    p.append_li(R.R4, row_b)
    p.append_li(R.R2, 0)
    p.append_label("hammer_a")
    p.append_act(R.R1, False, R.R3, False, delay=act_delay_slots)
    p.append_pre(R.R1, False, False, delay=pre_delay_slots)
    p.append_addi(R.R2, R.R2, 1)
    p.append_bl(R.R2, acts_per_side, "hammer_a")
    p.append_li(R.R2, 0)
    p.append_label("hammer_b")
    p.append_act(R.R1, False, R.R4, False, delay=act_delay_slots)
    p.append_pre(R.R1, False, False, delay=pre_delay_slots)
    p.append_addi(R.R2, R.R2, 1)
    p.append_bl(R.R2, acts_per_side, "hammer_b")
    return p


def paired_activation(
    bank: int,
    row1: int,
    row2: int,
    act_delay_slots: int,
    pre_delay_slots: int,
    close_delay_slots: int = 31,
) -> Program:
    """ACT ``row1`` → PRE → ACT ``row2`` with controlled spacings, then a
    nominal-delay PRE to close the bank.  With reduced spacings and suitable
    rows this drives the device's multi-row activation path."""
    p = Program()
    p.append_li(R.R1, bank)
    p.append_li(R.R2, row1)
    p.append_li(R.R3, row2)
    p.append_act(R.R1, False, R.R2, False, delay=act_delay_slots)
    p.append_pre(R.R1, False, False, delay=pre_delay_slots)
    p.append_act(R.R1, False, R.R3, False, delay=close_delay_slots)
    p.append_pre(R.R1, False, False, delay=0)
    return p
