"""Behavioral DRAM device: geometry, bank state, data storage, timing-rule
checking, and the parametric fault models.

Commands arrive as :class:`IssuedCommand` events on a wall-clock bus-slot
timeline.  Illegal commands (timing or state) are recorded and execution
continues with defined fallback semantics — a memory tester must keep
running through violations, they are the data being collected.
"""

from __future__ import annotations

import enum
from collections import Counter, deque
from dataclasses import dataclass, field

import numpy as np

from . import faults
from .faults import (
    FaultModelConfig,
    majority_bits,
    pack_bits,
    select_epsilon,
    unpack_bits,
    window_patterns,
)
from .timing import TimingChecker, TimingViolation

BANKED_COMMANDS = frozenset({"ACT", "PRE", "READ", "WRITE"})
DEVICE_COMMANDS = frozenset({"PREA", "REF", "ZQS"})


class DramError(Exception):
    code = "DramError"


class UnknownBank(DramError):
    code = "UnknownBank"


class UnknownRow(DramError):
    code = "UnknownRow"


class UnknownColumn(DramError):
    code = "UnknownColumn"


@dataclass(frozen=True)
class Geometry:
    banks: int = 16
    rows_per_bank: int = 32768
    columns_per_row: int = 128  # 512-bit transfer units
    transfer_bits: int = 512
    burst_length: int = 8  # column addresses per transfer
    refresh_rows_per_command: int | None = None  # default: full pass in 8192 REFs

    def __post_init__(self) -> None:
        for name in ("banks", "rows_per_bank", "columns_per_row", "burst_length"):
            if getattr(self, name) < 1:
                raise ValueError(f"geometry {name} must be >= 1")
        if self.transfer_bits % 8:
            raise ValueError("transfer_bits must be a multiple of 8")

    @property
    def row_cells(self) -> int:
        return self.columns_per_row * self.transfer_bits

    @property
    def row_bytes(self) -> int:
        return self.row_cells // 8

    @property
    def transfer_bytes(self) -> int:
        return self.transfer_bits // 8

    @property
    def column_addresses(self) -> int:
        return self.columns_per_row * self.burst_length

    @property
    def ref_rows(self) -> int:
        if self.refresh_rows_per_command is not None:
            return self.refresh_rows_per_command
        return max(1, self.rows_per_bank // 8192)

    @classmethod
    def from_dict(cls, d: dict | None) -> "Geometry":
        d = d or {}
        return cls(
            banks=int(d.get("banks", 16)),
            rows_per_bank=int(d.get("rows_per_bank", 32768)),
            columns_per_row=int(d.get("columns_per_row", 128)),
            transfer_bits=int(d.get("transfer_bits", 512)),
            burst_length=int(d.get("burst_length", 8)),
            refresh_rows_per_command=d.get("refresh_rows_per_command"),
        )

    def to_dict(self) -> dict:
        return {
            "banks": self.banks,
            "rows_per_bank": self.rows_per_bank,
            "columns_per_row": self.columns_per_row,
            "transfer_bits": self.transfer_bits,
            "burst_length": self.burst_length,
            "refresh_rows_per_command": self.refresh_rows_per_command,
        }


class BankStatus(str, enum.Enum):
    PRECHARGED = "precharged"
    ACTIVATING = "activating"
    ACTIVE = "active"
    PRECHARGING = "precharging"


@dataclass
class BankState:
    status: BankStatus = BankStatus.PRECHARGED
    status_since: int = 0
    open_row: int | None = None
    last_act_row: int | None = None  # previous activated row (alternation bonus)
    recent: deque = field(default_factory=lambda: deque(maxlen=2))  # (op, row, t)
    hammer_acc: dict = field(default_factory=dict)  # row -> accumulated disturbance
    last_restore: dict = field(default_factory=dict)  # row -> bus slot of last restore

    @property
    def row_open(self) -> bool:
        return self.open_row is not None

    def settle(self, t: int) -> None:
        """Promote transient states whose command slot has passed."""
        if t > self.status_since:
            if self.status is BankStatus.ACTIVATING:
                self.status = BankStatus.ACTIVE
            elif self.status is BankStatus.PRECHARGING:
                self.status = BankStatus.PRECHARGED


@dataclass(frozen=True)
class IssuedCommand:
    op: str
    t: int  # wall bus slot
    bank: int | None = None
    row: int | None = None
    col: int | None = None  # column address (burst-address granularity)
    auto_precharge: bool = False
    data: bytes | None = None  # WRITE payload, one transfer


@dataclass(frozen=True)
class StateViolation:
    t: int
    bank: int | None
    cmd: str
    kind: str


@dataclass(frozen=True)
class FlipEvent:
    t: int
    bank: int
    row: int
    cells_changed: int


@dataclass(frozen=True)
class MajorityEvent:
    t: int
    bank: int
    segment: int
    epsilon: float


@dataclass
class CommandEvents:
    command: IssuedCommand
    timing_violations: list = field(default_factory=list)
    state_violations: list = field(default_factory=list)
    flips: list = field(default_factory=list)
    majority: MajorityEvent | None = None
    read_data: bytes | None = None


class DramDevice:
    """One simulated device; independent instances are isolated."""

    def __init__(
        self,
        geometry: Geometry,
        rules,
        slot_ns: float,
        fault_model: FaultModelConfig | None = None,
        energy_constants: dict | None = None,
    ) -> None:
        self.geometry = geometry
        self.slot_ns = float(slot_ns)
        self.checker = TimingChecker(rules, slot_ns)
        self.fault = fault_model or FaultModelConfig()
        self.energy_constants = {k: float(v) for k, v in (energy_constants or {}).items()}
        self.banks = [BankState() for _ in range(geometry.banks)]
        self.command_counts: Counter = Counter()
        self.timing_violations: list[TimingViolation] = []
        self.state_violations: list[StateViolation] = []
        self.flip_log: list[FlipEvent] = []
        self.majority_log: list[MajorityEvent] = []
        self.total_flips = 0
        self.refresh_pointer = 0
        self.in_self_refresh = False
        self._rows: dict[tuple[int, int], np.ndarray] = {}
        self._thresholds: dict[tuple[int, int], np.ndarray] = {}
        self._gates: dict[tuple[int, int], np.ndarray] = {}
        self._segment_eps: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._maj_rng = np.random.default_rng([self.fault.seed, faults.TAG_MAJ_DRAW])

    # -- storage access ----------------------------------------------------

    def _row(self, bank: int, row: int) -> np.ndarray:
        key = (bank, row)
        data = self._rows.get(key)
        if data is None:
            data = np.zeros(self.geometry.row_bytes, dtype=np.uint8)
            self._rows[key] = data
        return data

    def load_row(self, bank: int, row: int, data: bytes, t: int = 0) -> None:
        """Backdoor initialization: set a row's content and restore stamp."""
        self._check_bank(bank)
        self._check_row(row)
        buf = np.frombuffer(bytes(data), dtype=np.uint8)
        if buf.size != self.geometry.row_bytes:
            raise ValueError(
                f"row data is {buf.size} bytes, geometry needs {self.geometry.row_bytes}"
            )
        self._rows[(bank, row)] = buf.copy()
        self.banks[bank].last_restore[row] = t

    def read_row(self, bank: int, row: int) -> bytes:
        """Backdoor readout of stored content (no retention decay applied)."""
        self._check_bank(bank)
        self._check_row(row)
        return self._row(bank, row).tobytes()

    def row_thresholds(self, bank: int, row: int) -> np.ndarray:
        key = (bank, row)
        th = self._thresholds.get(key)
        if th is None:
            th = faults.cell_thresholds(
                self.fault.rowhammer.thresholds,
                self.fault.seed,
                bank,
                row,
                self.geometry.row_cells,
                pin_min=self.fault.rowhammer.pin_min_threshold,
            )
            self._thresholds[key] = th
        return th

    def row_gates(self, bank: int, row: int) -> np.ndarray:
        key = (bank, row)
        g = self._gates.get(key)
        if g is None:
            g = faults.cell_gates(
                self.fault.seed, bank, row, self.geometry.row_cells
            )
            self._gates[key] = g
        return g

    def segment_epsilons(self, bank: int) -> tuple[np.ndarray, np.ndarray]:
        eps = self._segment_eps.get(bank)
        if eps is None:
            eps = faults.segment_epsilons(
                self.fault.majority.segment_epsilon,
                self.fault.seed,
                bank,
                self.geometry.rows_per_bank // 4,
            )
            self._segment_eps[bank] = eps
        return eps

    # -- validation ---------------------------------------------------------

    def _check_bank(self, bank) -> None:
        if bank is None or not 0 <= bank < self.geometry.banks:
            raise UnknownBank(f"bank {bank} outside 0..{self.geometry.banks - 1}")

    def _check_row(self, row) -> None:
        if row is None or not 0 <= row < self.geometry.rows_per_bank:
            raise UnknownRow(f"row {row} outside 0..{self.geometry.rows_per_bank - 1}")

    def _check_col(self, col) -> None:
        if col is None or not 0 <= col < self.geometry.column_addresses:
            raise UnknownColumn(
                f"column address {col} outside 0..{self.geometry.column_addresses - 1}"
            )

    # -- command entry point -------------------------------------------------

    def apply_command(self, cmd: IssuedCommand) -> CommandEvents:
        events = CommandEvents(command=cmd)
        for bank in self.banks:
            bank.settle(cmd.t)
        if self.in_self_refresh:
            events.state_violations.append(
                StateViolation(cmd.t, cmd.bank, cmd.op, "command_during_self_refresh")
            )
        bank_for_rule = cmd.bank if cmd.op in BANKED_COMMANDS else None
        if cmd.op in BANKED_COMMANDS:
            self._check_bank(cmd.bank)
        viols = self.checker.observe(cmd.op, bank_for_rule, cmd.t)
        events.timing_violations.extend(viols)
        self.timing_violations.extend(viols)
        self.command_counts[cmd.op] += 1

        if cmd.op == "ACT":
            self._do_act(cmd, events)
        elif cmd.op == "PRE":
            self._do_pre(cmd.bank, cmd.t)
        elif cmd.op == "PREA":
            for b in range(self.geometry.banks):
                self._do_pre(b, cmd.t, op="PREA")
        elif cmd.op == "READ":
            self._do_read(cmd, events)
        elif cmd.op == "WRITE":
            self._do_write(cmd, events)
        elif cmd.op == "REF":
            self._do_ref(cmd, events)
        elif cmd.op == "ZQS":
            pass
        else:
            raise DramError(f"unknown command {cmd.op!r}")

        self.state_violations.extend(events.state_violations)
        return events

    # -- per-command semantics ------------------------------------------------

    def _do_act(self, cmd: IssuedCommand, events: CommandEvents) -> None:
        self._check_row(cmd.row)
        bank = self.banks[cmd.bank]
        if bank.row_open:
            # Fallback: implicit close, then activate the requested row.
            events.state_violations.append(
                StateViolation(cmd.t, cmd.bank, "ACT", "activate_open_bank")
            )
        self._maybe_multi_row_activation(cmd, events)
        self._hammer_account(cmd.bank, cmd.row, cmd.t, events)
        # Activation restores the row's own charge.
        bank.hammer_acc.pop(cmd.row, None)
        bank.last_restore[cmd.row] = cmd.t
        bank.last_act_row = cmd.row
        bank.open_row = cmd.row
        bank.status = BankStatus.ACTIVATING
        bank.status_since = cmd.t
        bank.recent.append(("ACT", cmd.row, cmd.t))

    def _do_pre(self, bank_id: int, t: int, op: str = "PRE") -> None:
        if op == "PRE":
            self._check_bank(bank_id)
        bank = self.banks[bank_id]
        if bank.row_open:
            bank.open_row = None
            bank.status = BankStatus.PRECHARGING
            bank.status_since = t
        # Precharging an idle bank is legal and does nothing.
        bank.recent.append((op, None, t))

    def _do_read(self, cmd: IssuedCommand, events: CommandEvents) -> None:
        self._check_col(cmd.col)
        bank = self.banks[cmd.bank]
        nbytes = self.geometry.transfer_bytes
        if not bank.row_open:
            events.state_violations.append(
                StateViolation(cmd.t, cmd.bank, "READ", "read_closed_bank")
            )
            events.read_data = bytes(nbytes)
        else:
            xfer = cmd.col // self.geometry.burst_length
            data = self._read_view(cmd.bank, bank.open_row, cmd.t)
            events.read_data = data[xfer * nbytes : (xfer + 1) * nbytes].tobytes()
        bank.recent.append(("READ", bank.open_row, cmd.t))
        if cmd.auto_precharge and bank.row_open:
            bank.open_row = None
            bank.status = BankStatus.PRECHARGING
            bank.status_since = cmd.t

    def _do_write(self, cmd: IssuedCommand, events: CommandEvents) -> None:
        self._check_col(cmd.col)
        bank = self.banks[cmd.bank]
        nbytes = self.geometry.transfer_bytes
        data = cmd.data or bytes(nbytes)
        if len(data) != nbytes:
            raise ValueError(f"write data is {len(data)} bytes, transfer is {nbytes}")
        if not bank.row_open:
            # Fallback: nowhere to land, the write is dropped.
            events.state_violations.append(
                StateViolation(cmd.t, cmd.bank, "WRITE", "write_closed_bank")
            )
        else:
            xfer = cmd.col // self.geometry.burst_length
            row = self._row(cmd.bank, bank.open_row)
            row[xfer * nbytes : (xfer + 1) * nbytes] = np.frombuffer(data, np.uint8)
        bank.recent.append(("WRITE", bank.open_row, cmd.t))
        if cmd.auto_precharge and bank.row_open:
            bank.open_row = None
            bank.status = BankStatus.PRECHARGING
            bank.status_since = cmd.t

    def _do_ref(self, cmd: IssuedCommand, events: CommandEvents) -> None:
        if any(b.row_open for b in self.banks):
            events.state_violations.append(
                StateViolation(cmd.t, None, "REF", "refresh_open_bank")
            )
        n = self.geometry.ref_rows
        rows = [
            (self.refresh_pointer + i) % self.geometry.rows_per_bank for i in range(n)
        ]
        for bank in self.banks:
            for row in rows:
                # Charge restored, accumulated disturbance cleared; flips
                # already latched into the data stay.
                bank.hammer_acc.pop(row, None)
                bank.last_restore[row] = cmd.t
        self.refresh_pointer = (self.refresh_pointer + n) % self.geometry.rows_per_bank

    # -- self-refresh ---------------------------------------------------------

    def enter_self_refresh(self, t: int) -> None:
        self.in_self_refresh = True

    def exit_self_refresh(self, t: int) -> None:
        """Self-refresh internally refreshes everything: on exit all rows are
        restored and accumulators cleared (latched flips persist)."""
        self.in_self_refresh = False
        for bank in self.banks:
            bank.hammer_acc.clear()
        for (b, row) in self._rows:
            self.banks[b].last_restore[row] = t

    # -- fault mechanics --------------------------------------------------------

    def _hammer_account(
        self, bank_id: int, agg_row: int, t: int, events: CommandEvents
    ) -> None:
        rh = self.fault.rowhammer
        if rh is None:
            return
        bank = self.banks[bank_id]
        prev = bank.last_act_row
        rows_per_bank = self.geometry.rows_per_bank
        agg_bits = None
        agg_codes = None
        weights = ((1, rh.base_disturb), (2, rh.base_disturb * rh.distance2_weight_ratio))
        for dist, weight in weights:
            if weight <= 0:
                continue
            for victim in (agg_row - dist, agg_row + dist):
                if not 0 <= victim < rows_per_bank:
                    continue
                acc = bank.hammer_acc.get(victim, 0.0) + weight
                if dist == 1 and prev is not None and prev == 2 * victim - agg_row:
                    acc += rh.alternation_bonus
                bank.hammer_acc[victim] = acc
                ripe = self.row_thresholds(bank_id, victim) <= acc
                if not ripe.any():
                    continue
                if agg_bits is None:
                    agg_bits = unpack_bits(self._row(bank_id, agg_row))
                    if rh.gate_enabled:
                        agg_codes = window_patterns(
                            agg_bits, rh.gate_offsets, self.geometry.transfer_bits
                        )
                flip_mask = ripe
                if rh.gate_enabled:
                    flip_mask = ripe & (agg_codes == self.row_gates(bank_id, victim))
                if not flip_mask.any():
                    continue
                victim_bits = unpack_bits(self._row(bank_id, victim))
                changed = int(np.sum(flip_mask & (victim_bits != agg_bits)))
                if changed:
                    # Disturbed cells take the aggressor's value and stay
                    # there until the row is rewritten.
                    victim_bits[flip_mask] = agg_bits[flip_mask]
                    self._rows[(bank_id, victim)] = pack_bits(victim_bits)
                    self.total_flips += changed
                    ev = FlipEvent(t, bank_id, victim, changed)
                    events.flips.append(ev)
                    self.flip_log.append(ev)

    def _maybe_multi_row_activation(
        self, cmd: IssuedCommand, events: CommandEvents
    ) -> None:
        mj = self.fault.majority
        if mj is None or not mj.valid_timing_set:
            return
        bank = self.banks[cmd.bank]
        if len(bank.recent) < 2:
            return
        (op1, row1, t1), (op2, _, t2) = bank.recent
        if op1 != "ACT" or op2 != "PRE":
            return
        if row1 is None or row1 % 4 != 1 or cmd.row % 4 != 2:
            return
        if row1 // 4 != cmd.row // 4:
            return
        tras_obs = (t2 - t1) * self.slot_ns
        trp_obs = (cmd.t - t2) * self.slot_ns
        if not any(
            abs(tras_obs - a) < 1e-9 and abs(trp_obs - b) < 1e-9
            for a, b in mj.valid_timing_set
        ):
            return
        segment = cmd.row // 4
        base = segment * 4
        bits = [unpack_bits(self._row(cmd.bank, base + i)) for i in range(3)]
        eps_and, eps_or = self.segment_epsilons(cmd.bank)
        eps = select_epsilon(bits[0], bits[1], eps_and[segment], eps_or[segment])
        value = majority_bits(*bits)
        value = faults.apply_complement_errors(value, eps, self._maj_rng)
        packed = pack_bits(value)
        for i in range(3):
            self._rows[(cmd.bank, base + i)] = packed.copy()
        ev = MajorityEvent(cmd.t, cmd.bank, segment, eps)
        events.majority = ev
        self.majority_log.append(ev)

    def _read_view(self, bank_id: int, row: int, t: int) -> np.ndarray:
        data = self._row(bank_id, row)
        rt = self.fault.retention
        if rt is None:
            return data
        age_ns = (t - self.banks[bank_id].last_restore.get(row, 0)) * self.slot_ns
        if age_ns <= 0:
            return data
        t_ret = faults.retention_times(
            rt.t_ret_ns, self.fault.seed, bank_id, row, self.geometry.row_cells
        )
        decayed = t_ret < age_ns
        if not decayed.any():
            return data
        anti = faults.anti_cell_mask(
            rt.anti_cell_fraction, self.fault.seed, bank_id, row, self.geometry.row_cells
        )
        bits = unpack_bits(data).copy()
        bits[decayed] = anti[decayed]
        return pack_bits(bits)

    # -- reporting ----------------------------------------------------------------

    def energy_report(self) -> dict:
        totals = {
            op: count * self.energy_constants.get(op, 0.0)
            for op, count in sorted(self.command_counts.items())
        }
        totals["total"] = sum(totals.values())
        return totals

    def check_invariants(self) -> None:
        for i, bank in enumerate(self.banks):
            has_row = bank.open_row is not None
            in_open_state = bank.status in (BankStatus.ACTIVATING, BankStatus.ACTIVE)
            if has_row != in_open_state:
                raise AssertionError(
                    f"bank {i}: open_row={bank.open_row} status={bank.status}"
                )
