"""Shared fixtures/helpers: device construction and seeded program generators
used by the emulator, platform, and acceptance suites."""

from __future__ import annotations

import numpy as np

from dramlab.builder import Program
from dramlab.dram import DramDevice, Geometry
from dramlab.faults import FaultModelConfig
from dramlab.isa import Register as R
from dramlab.programs import column_sweep_read
from dramlab.timing import DDR4_RULES


def make_device(
    rules=DDR4_RULES,
    slot_ns: float = 1.5,
    seed: int = 0,
    geometry: Geometry | None = None,
    fault: FaultModelConfig | None = None,
    energy: dict | None = None,
) -> DramDevice:
    return DramDevice(
        geometry or Geometry(),
        rules,
        slot_ns,
        fault_model=fault or FaultModelConfig(seed=seed),
        energy_constants=energy,
    )


def listing1():
    """The canonical single-row column sweep: 1 ACT, 128 strided READs, 1 PRE."""
    return column_sweep_read().assemble()


def random_linear_program(rng: np.random.Generator):
    """A terminating random program mixing ALU work, scratchpad traffic, and
    bounded DRAM loops; used for emulator-vs-reference recounts."""
    p = Program()
    bank = int(rng.integers(0, 16))
    row = int(rng.integers(0, 32768))
    p.append_li(R.R1, bank)
    p.append_li(R.R2, row)
    p.append_li(R.CASR, 8)
    p.append_li(R.RASR, int(rng.integers(0, 4)))
    counter_regs = [R.R6, R.R7, R.R8]
    for block in range(int(rng.integers(1, 4))):
        kind = rng.choice(["sweep", "hammer", "alu"])
        ctr = counter_regs[block]
        if kind == "sweep":
            iters = int(rng.integers(1, 33))
            label = f"sweep{block}"
            p.append_li(R.R3, 0)
            p.append_act(R.R1, False, R.R2, False, delay=11)
            p.append_label(label)
            p.append_read(R.R1, False, R.R3, True, False, False, delay=0)
            p.append_bl(R.R3, 8 * iters, label)
            p.append_pre(R.R1, False, False, delay=int(rng.integers(0, 12)))
        elif kind == "hammer":
            iters = int(rng.integers(1, 17))
            label = f"hammer{block}"
            p.append_li(ctr, 0)
            p.append_label(label)
            p.append_act(R.R1, False, R.R2, False, delay=21)
            p.append_pre(R.R1, False, False, delay=8)
            p.append_addi(ctr, ctr, 1)
            p.append_bl(ctr, iters, label)
        else:
            p.append_li(R.R4, int(rng.integers(0, 1 << 16)))
            p.append_li(R.R5, int(rng.integers(0, 1 << 16)))
            p.append_add(R.R9, R.R4, R.R5)
            p.append_xor(R.R10, R.R9, R.R4)
            p.append_st(R.R10, R.R0, int(rng.integers(0, 64)))
            p.append_ld(R.R11, R.R0, int(rng.integers(0, 64)))
            p.append_sub(R.R9, R.R11, R.R5)
            p.append_src(R.R9, R.R4)
    return p.assemble()


def random_readback_program(rng: np.random.Generator):
    """READ-heavy program with several hint-guarded runs; returns
    (assembled, total_reads)."""
    p = Program()
    p.append_li(R.R1, int(rng.integers(0, 16)))
    p.append_li(R.R2, int(rng.integers(0, 32768)))
    p.append_li(R.CASR, 8)
    p.append_act(R.R1, False, R.R2, False, delay=11)
    total = 0
    for j in range(int(rng.integers(2, 7))):
        iters = int(rng.integers(1, 129))
        total += iters
        label = f"run{j}"
        p.append_li(R.R3, 0)
        p.append_label(label)
        p.append_read(R.R1, False, R.R3, True, False, False, delay=0)
        p.append_bl(R.R3, 8 * iters, label)
    p.append_pre(R.R1, False, False, delay=0)
    return p.assemble(), total
