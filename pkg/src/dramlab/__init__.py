"""dramlab: a software testbench for FPGA-style DRAM testing — test-program
assembler, cycle-level core emulator, and a behavioral DRAM device model with
parametric fault models (disturbance, in-array majority, retention)."""

__version__ = "0.1.0"

from .asm import parse_assembly, parse_instruction
from .builder import AssembledProgram, DelaySpec, Program, from_script, load_image
from .config import initialize, load_config
from .core import CoreState, RunReport, load_program, run, step
from .debugger import DebugSession, simulate
from .dram import DramDevice, Geometry, IssuedCommand
from .faults import FaultModelConfig
from .isa import (
    DramCommand,
    DramInstr,
    DramOpcode,
    Register,
    RegularOp,
    RegularOpcode,
    decode,
    disassemble,
    encode,
)
from .platform import (
    ConfigError,
    HostDrain,
    PeriodicScheduler,
    Platform,
    ReadbackFifo,
    fifo_gate,
)
from .timing import DDR3_RULES, DDR4_RULES, TimingChecker, TimingRule

__all__ = [
    "__version__",
    "AssembledProgram",
    "ConfigError",
    "CoreState",
    "DDR3_RULES",
    "DDR4_RULES",
    "DebugSession",
    "DelaySpec",
    "DramCommand",
    "DramDevice",
    "DramInstr",
    "DramOpcode",
    "FaultModelConfig",
    "Geometry",
    "HostDrain",
    "IssuedCommand",
    "PeriodicScheduler",
    "Platform",
    "Program",
    "ReadbackFifo",
    "Register",
    "RegularOp",
    "RegularOpcode",
    "RunReport",
    "TimingChecker",
    "TimingRule",
    "decode",
    "disassemble",
    "encode",
    "fifo_gate",
    "from_script",
    "initialize",
    "load_config",
    "load_image",
    "load_program",
    "parse_assembly",
    "parse_instruction",
    "run",
    "simulate",
    "step",
]
