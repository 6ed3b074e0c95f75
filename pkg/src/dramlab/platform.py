"""Board-level runtime: readback FIFO with host-drain modeling, the
periodic-operation scheduler, and the experiment workflow API
(initialize / execute / receive_data).

The host link is slower than the DRAM bus, so readback data accumulates in
a bounded FIFO that hint gating must protect; periodic maintenance
operations (refresh, ZQ calibration, periodic reads) are injected between
instructions whenever the DRAM pipeline is idle and no hint-guarded read
run is in flight.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from . import core as core_mod
from .core import SLOTS_PER_CYCLE, CoreState, RunReport, load_program
from .dram import DramDevice, IssuedCommand
from .isa import FIFO_CAPACITY, DramInstr


class PlatformError(Exception):
    code = "PlatformError"


class ConfigError(PlatformError):
    code = "ConfigError"

    def __init__(self, path: str, reason: str) -> None:
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


class ReadbackFifo:
    """Bounded queue of DRAM data transfers awaiting the host."""

    def __init__(self, capacity: int = FIFO_CAPACITY) -> None:
        if capacity <= 0:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.high_water = 0
        self._queue: deque[bytes] = deque()

    def __len__(self) -> int:
        return len(self._queue)

    @property
    def occupancy(self) -> int:
        return len(self._queue)

    @property
    def free_space(self) -> int:
        return self.capacity - len(self._queue)

    def push(self, transfer: bytes) -> None:
        if len(self._queue) >= self.capacity:
            raise OverflowError("readback FIFO full")
        self._queue.append(transfer)
        if len(self._queue) > self.high_water:
            self.high_water = len(self._queue)

    def pop(self) -> bytes | None:
        return self._queue.popleft() if self._queue else None


def fifo_gate(fifo: ReadbackFifo, hint_count: int) -> bool:
    """Proceed iff the FIFO can absorb the whole hinted read run."""
    return fifo.free_space >= hint_count


class HostDrain:
    """Models the slow host link: drains a fractional number of transfers
    per core cycle into the host buffer.  Idle link time is not banked —
    credit accumulates only while data is queued."""

    def __init__(self, drain_rate: float = 0.25) -> None:
        if drain_rate < 0:
            raise ValueError(f"drain_rate must be >= 0, got {drain_rate}")
        self.drain_rate = float(drain_rate)
        self.received: list[bytes] = []
        self._credit = 0.0

    def tick(self, fifo: ReadbackFifo, cycles: int) -> int:
        self._credit += self.drain_rate * cycles
        drained = 0
        while self._credit >= 1.0 and len(fifo):
            self.received.append(fifo.pop())
            self._credit -= 1.0
            drained += 1
        if not len(fifo):
            self._credit = 0.0
        return drained


#: canned maintenance sequences as (command name, slot offset) pairs; the
#: offsets leave standard-compliant gaps at both supported slot widths.
REFRESH_SEQUENCE = (("PREA", 0), ("REF", 10))
ZQS_SEQUENCE = (("ZQS", 0),)
PERIODIC_READ_SEQUENCE = (("ACT", 0), ("READ", 9), ("PRE", 22))


@dataclass
class PeriodicOp:
    name: str
    period_ns: float
    sequence: tuple
    enabled: bool = False
    next_due_ns: float = 0.0

    def span_cycles(self) -> int:
        last = max(offset for _, offset in self.sequence)
        return max(1, math.ceil((last + 1) / SLOTS_PER_CYCLE))


class PeriodicScheduler:
    """Injects due maintenance operations at idle instruction boundaries.

    Arbitration priority on simultaneous due times: refresh > zqs >
    periodic read.  Each op's timer restarts from its injection time, so
    injected refreshes are never closer than the configured period."""

    def __init__(
        self,
        slot_ns: float,
        refresh_ns: float = 7800.0,
        zqs_ns: float = 128e6,
        periodic_read_ns: float = 1e6,
        refresh_enabled: bool = False,
        zqs_enabled: bool = False,
        periodic_read_enabled: bool = False,
    ) -> None:
        self.slot_ns = float(slot_ns)
        self.ops = [
            PeriodicOp("refresh", refresh_ns, REFRESH_SEQUENCE, refresh_enabled),
            PeriodicOp("zqs", zqs_ns, ZQS_SEQUENCE, zqs_enabled),
            PeriodicOp(
                "periodic_read", periodic_read_ns, PERIODIC_READ_SEQUENCE,
                periodic_read_enabled,
            ),
        ]
        self.reset(0.0)

    def reset(self, start_ns: float = 0.0) -> None:
        for op in self.ops:
            op.next_due_ns = start_ns + op.period_ns

    @property
    def any_enabled(self) -> bool:
        return any(op.enabled for op in self.ops)

    def _idle(self, core: CoreState, device: DramDevice) -> bool:
        if core.hint_guard_remaining > 0:
            return False
        if device.in_self_refresh:
            return False
        if not 0 <= core.pc < len(core.program):
            return False
        return not isinstance(core.program[core.pc], DramInstr)

    def _inject(self, core: CoreState, device: DramDevice, op: PeriodicOp,
                report: RunReport, collect_trace: bool) -> int:
        base = core.wall_slot
        for name, offset in op.sequence:
            cmd = IssuedCommand(
                name,
                base + offset,
                bank=0 if name in ("ACT", "READ", "PRE") else None,
                row=0 if name == "ACT" else None,
                col=0 if name == "READ" else None,
            )
            dev_ev = device.apply_command(cmd)
            report.histogram[cmd.op] += 1
            report.timing_violations.extend(dev_ev.timing_violations)
            report.state_violations.extend(dev_ev.state_violations)
            if collect_trace:
                report.trace.append(core_mod.trace_row(cmd))
        report.injected.append((base, op.name))
        stall = op.span_cycles()
        core.core_cycle += stall
        op.next_due_ns = core.wall_slot * self.slot_ns + op.period_ns
        return stall

    def poll(self, core: CoreState, device: DramDevice, report: RunReport,
             collect_trace: bool = False) -> int:
        """Inject every due enabled op (in priority order) if the pipeline
        is idle; returns the stall cycles imposed on the core."""
        if not self.any_enabled or not self._idle(core, device):
            return 0
        stall = 0
        progress = True
        while progress:
            progress = False
            now_ns = core.wall_slot * self.slot_ns
            for op in self.ops:
                if op.enabled and now_ns >= op.next_due_ns:
                    stall += self._inject(core, device, op, report, collect_trace)
                    progress = True
                    break
        return stall


class Platform:
    """One device + core + FIFO + scheduler execution unit."""

    def __init__(
        self,
        device: DramDevice,
        fifo: ReadbackFifo | None = None,
        host: HostDrain | None = None,
        scheduler: PeriodicScheduler | None = None,
        name: str = "custom",
    ) -> None:
        self.device = device
        self.fifo = fifo if fifo is not None else ReadbackFifo()
        self.host = host if host is not None else HostDrain()
        self.scheduler = (
            scheduler
            if scheduler is not None
            else PeriodicScheduler(device.slot_ns)
        )
        self.name = name
        self.core: CoreState | None = None
        self._cursor = 0  # transfers already handed out by receive_data

    @property
    def slot_ns(self) -> float:
        return self.device.slot_ns

    def load(self, program) -> CoreState:
        self.core = load_program(CoreState(), program)
        return self.core

    def execute(
        self,
        program,
        max_cycles: int = 10_000_000,
        collect_trace: bool = False,
    ) -> RunReport:
        """Load and run a program to END/trap, scheduler and drain active."""
        self.load(program)
        scheduler = self.scheduler if self.scheduler.any_enabled else None
        return core_mod.run(
            self.core,
            self.device,
            fifo=self.fifo,
            host=self.host,
            scheduler=scheduler,
            max_cycles=max_cycles,
            collect_trace=collect_trace,
        )

    def receive_data(self, n_transfers: int) -> bytes:
        """Return up to ``n_transfers`` readback transfers in FIFO order,
        draining the FIFO as needed; short reads are allowed."""
        if n_transfers < 0:
            raise ValueError(f"n_transfers must be >= 0, got {n_transfers}")
        while (
            len(self.host.received) - self._cursor < n_transfers
            and len(self.fifo)
        ):
            self.host.received.append(self.fifo.pop())
        take = min(n_transfers, len(self.host.received) - self._cursor)
        block = b"".join(self.host.received[self._cursor : self._cursor + take])
        self._cursor += take
        return block
