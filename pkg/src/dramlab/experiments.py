"""Seeded reliability studies over the fault models.

Three study harnesses, each emitting a CSV plus a summary:

* interleave — double-sided disturbance with the activation budget split
  into alternating per-side blocks of T; sweeps T, reports per-victim flip
  counts and first-flip points;
* data_pattern — flip-location coverage of repeated-byte aggressor patterns
  versus random patterns on sampled victim cache blocks;
* majority — bit-error-rate grid over reduced (tRAS, tRP) pairs for the
  in-array AND/OR segments.

Desk-scale row sampling keeps runs in seconds; the closed-form disturbance
accumulator stands in for replaying every activation through the device
model (``predicted_flip_mask`` is the per-cell contract both sides meet).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import faults
from .calibrate import CROSS_SLACK, first_crossing
from .config import device_from_config, load_config
from .faults import hammer_accumulator, unpack_bits, window_patterns

TAG_STUDY1_ROWS = 101
TAG_STUDY2_ROWS = 102
TAG_STUDY2_PATTERNS = 103
TAG_STUDY3_BER = 104

T_GRID_DEFAULT = tuple(1 << k for k in range(17))  # 1 .. 65536
TIMING_GRID_DEFAULT = tuple(round(0.5 * k, 1) for k in range(3, 31, 3))  # 1.5..15.0

STUDIES = ("interleave", "data_pattern", "majority")

_VICTIMS = ("V1", "V2", "V3")
_AGG_BYTE = 0xAA  # alternating aggressor pattern; victims hold the complement
_VICTIM_BYTE = 0x55


class CalibrationMissing(Exception):
    """The chosen profile lacks the fault model this study exercises."""


@dataclass(frozen=True)
class StudyConfig:
    study: str
    profile: str = "mfrA"
    seed: int = 0
    rows_tested: int | None = None  # None: per-study desk-scale default
    total_acts: int = 1 << 20
    t_grid: tuple = T_GRID_DEFAULT
    trials: int = 100
    patterns_per_class: int = 256
    timing_grid: tuple = TIMING_GRID_DEFAULT
    segments_tested: int = 8192

    def __post_init__(self) -> None:
        if self.study not in STUDIES:
            raise ValueError(f"study must be one of {STUDIES}, got {self.study!r}")
        if not self.t_grid or not self.timing_grid:
            raise ValueError("sweep grids must be non-empty")
        for t in self.t_grid:
            if t < 1 or t > 65536 or t & (t - 1):
                raise ValueError(f"t_grid entries must be powers of two in [1, 65536], got {t}")
        if self.total_acts < 2 * max(self.t_grid):
            raise ValueError(
                f"total_acts {self.total_acts} below one double-sided round at T={max(self.t_grid)}"
            )
        if self.trials < 1 or self.patterns_per_class < 1 or self.segments_tested < 1:
            raise ValueError("counts must be positive")


@dataclass
class StudyResult:
    config: StudyConfig
    csv: str
    summary: dict
    table: str
    files: dict = field(default_factory=dict)  # basename -> content


def acts_issued(total_acts: int, t_per_side: int) -> int:
    """ACTs actually issued at one T: whole double-sided rounds only."""
    round_len = 2 * t_per_side
    return round_len * (total_acts // round_len)


def predicted_flip_mask(
    thresholds: np.ndarray,
    gates: np.ndarray,
    agg_bits: np.ndarray,
    acc: float,
    gate_offsets=(-4, 0, 4),
    transfer_bits: int = 512,
    gate_enabled: bool = True,
) -> np.ndarray:
    """Cells the device model flips once a victim's accumulator reaches
    ``acc`` under a fixed aggressor pattern (crossing + pattern gate)."""
    ripe = thresholds <= acc
    if not gate_enabled:
        return ripe
    codes = window_patterns(agg_bits, gate_offsets, transfer_bits)
    return ripe & (codes == gates)


def _load_profile(profile: str):
    dev = device_from_config(load_config(profile))
    return dev.geometry, dev.fault


def _sample_bases(seed: int, tag: int, rows_per_bank: int, count: int) -> np.ndarray:
    """Non-adjacent 8-row windows so sampled neighborhoods never overlap."""
    slots = rows_per_bank // 8
    if count > slots:
        raise ValueError(f"cannot place {count} windows in {slots} slots")
    rng = np.random.default_rng([seed, tag])
    return rng.choice(slots, size=count, replace=False) * 8


def _nth_act_position(a: int, t_per_side: int, leading: bool) -> int:
    """Index (1-based, in total ACTs) of one side's a-th activation under the
    alternating block schedule; the leading side owns the first block."""
    q, r = divmod(a - 1, t_per_side)
    offset = 0 if leading else t_per_side
    return q * 2 * t_per_side + offset + r + 1


def _single_side_crossing(
    threshold: float, t_per_side: int, w: float, leading: bool, limit: int
) -> int | None:
    """First total-ACT index at which a victim fed by only one aggressor
    side crosses ``threshold``."""
    if threshold <= CROSS_SLACK:
        return 0
    a = math.ceil((threshold - CROSS_SLACK) / w)
    n = _nth_act_position(a, t_per_side, leading)
    return n if n <= limit else None


# ---------------------------------------------------------------------------
# study 1 — interleaved double-sided disturbance


def run_study1(cfg: StudyConfig) -> StudyResult:
    geom, fault = _load_profile(cfg.profile)
    rh = fault.rowhammer
    if rh is None:
        raise CalibrationMissing(f"profile {cfg.profile!r} has no disturbance model")
    n_triples = cfg.rows_tested if cfg.rows_tested is not None else 1024
    n_cells = geom.row_cells
    bases = _sample_bases(cfg.seed, TAG_STUDY1_ROWS, geom.rows_per_bank, n_triples)

    agg_bits = unpack_bits(np.full(n_cells // 8, _AGG_BYTE, dtype=np.uint8))
    codes = window_patterns(agg_bits, rh.gate_offsets, geom.transfer_bits)

    t_grid = tuple(sorted(cfg.t_grid))
    w, beta = rh.base_disturb, rh.alternation_bonus
    # per-victim accumulator at full budget, per T; V1/V3 see one side only
    issued = {t: acts_issued(cfg.total_acts, t) for t in t_grid}
    acc_of = {
        "V1": {t: (issued[t] // 2) * w for t in t_grid},
        "V2": {t: hammer_accumulator(issued[t], t, w, beta) for t in t_grid},
        "V3": {t: (issued[t] // 2) * w for t in t_grid},
    }

    flips = {v: {t: [] for t in t_grid} for v in _VICTIMS}
    hc = {v: {t: [] for t in t_grid} for v in _VICTIMS}
    for base in bases:
        for victim, offset in (("V1", 0), ("V2", 2), ("V3", 4)):
            row = int(base) + offset
            th = faults.cell_thresholds(
                rh.thresholds, cfg.seed, 0, row, n_cells, pin_min=rh.pin_min_threshold
            )
            if rh.gate_enabled:
                gates = faults.cell_gates(cfg.seed, 0, row, n_cells)
                matching = np.sort(th[codes == gates])
            else:
                matching = np.sort(th)
            m_row = float(matching[0]) if matching.size else math.inf
            for t in t_grid:
                count = int(np.searchsorted(matching, acc_of[victim][t] + CROSS_SLACK, "right"))
                flips[victim][t].append(count)
                if victim == "V2":
                    n_star = first_crossing(m_row, t, w, beta, issued[t])
                else:
                    n_star = _single_side_crossing(m_row, t, w, victim == "V1", issued[t])
                if n_star is not None:
                    hc[victim][t].append((n_star + 1) // 2)

    lines = ["T,victim,flips_avg,flips_norm,hc_first_min"]
    t_ref = t_grid[-1]
    summary: dict = {
        "profile": cfg.profile,
        "triples": n_triples,
        "total_acts": cfg.total_acts,
        "iterations": {t: cfg.total_acts // (2 * t) for t in t_grid},
        "per_victim": {},
    }
    for victim in _VICTIMS:
        ref = float(np.mean(flips[victim][t_ref]))
        per_t = {}
        for t in t_grid:
            avg = float(np.mean(flips[victim][t]))
            norm = avg / ref if ref else math.nan
            h = min(hc[victim][t]) if hc[victim][t] else None
            per_t[t] = {"flips_avg": avg, "hc_first_min": h}
            lines.append(
                f"{t},{victim},{avg:.6f},{norm:.6f},{'' if h is None else h}"
            )
        summary["per_victim"][victim] = per_t
    csv = _study1_csv_order(lines, t_grid)

    table = _study1_table(summary, t_grid)
    return StudyResult(cfg, csv, summary, table, files={"study1.csv": csv})


def _study1_csv_order(lines: list, t_grid: tuple) -> str:
    header, body = lines[0], lines[1:]
    order = {(t, v): i for i, (t, v) in enumerate((t, v) for t in t_grid for v in _VICTIMS)}

    def key(line: str):
        t_s, v, *_ = line.split(",")
        return order[(int(t_s), v)]

    return "\n".join([header] + sorted(body, key=key)) + "\n"


def _study1_table(summary: dict, t_grid: tuple) -> str:
    rows = [f"{'T':>6}  " + "".join(f"{v + ' flips':>12}" for v in _VICTIMS) + f"{'V2 hc_first':>14}"]
    for t in t_grid:
        cells = "".join(
            f"{summary['per_victim'][v][t]['flips_avg']:>12.1f}" for v in _VICTIMS
        )
        h = summary["per_victim"]["V2"][t]["hc_first_min"]
        rows.append(f"{t:>6}  {cells}{'' if h is None else h:>14}")
    return "\n".join(rows)


# ---------------------------------------------------------------------------
# study 2 — data-pattern flip coverage


def _pattern_codes(bits_matrix: np.ndarray, offsets, transfer_bits: int) -> np.ndarray:
    return np.stack(
        [window_patterns(row, offsets, transfer_bits) for row in bits_matrix]
    )


def run_study2(cfg: StudyConfig) -> StudyResult:
    geom, fault = _load_profile(cfg.profile)
    rh = fault.rowhammer
    if rh is None:
        raise CalibrationMissing(f"profile {cfg.profile!r} has no disturbance model")
    n_rows = cfg.rows_tested if cfg.rows_tested is not None else 24
    block = geom.transfer_bits  # one cache block: the row's first transfer
    bases = _sample_bases(cfg.seed, TAG_STUDY2_ROWS, geom.rows_per_bank, n_rows)
    victims = bases + 4

    acc = hammer_accumulator(cfg.total_acts, 1, rh.base_disturb, rh.alternation_bonus)

    # aggressor content per class; the victim block sees the first transfer
    n_pat = cfg.patterns_per_class
    repeated = np.stack(
        [
            unpack_bits(np.full(block // 8, byte, dtype=np.uint8))
            for byte in range(min(n_pat, 256))
        ]
    )
    rng = np.random.default_rng([cfg.seed, TAG_STUDY2_PATTERNS])
    random_bytes = rng.integers(0, 256, size=(n_pat, block // 8), dtype=np.uint8)
    random = np.stack([unpack_bits(row) for row in random_bytes])
    class_codes = {
        "repeated8": _pattern_codes(repeated, rh.gate_offsets, block),
        "random512": _pattern_codes(random, rh.gate_offsets, block),
    }

    lines = ["pattern_class,victim_row,flipped_bit_positions"]
    coverage = {name: {} for name in class_codes}
    for row in victims:
        row = int(row)
        th = faults.cell_thresholds(
            rh.thresholds, cfg.seed, 0, row, geom.row_cells, pin_min=rh.pin_min_threshold
        )[:block]
        gates = faults.cell_gates(cfg.seed, 0, row, geom.row_cells)[:block]
        eligible = th <= acc + CROSS_SLACK
        for name, codes in class_codes.items():
            # union over patterns and over the two victim-init runs: a gated
            # crossing is observable under at least one of all-0s / all-1s
            if rh.gate_enabled:
                hit = eligible & (codes == gates[None, :]).any(axis=0)
            else:
                hit = eligible
            positions = np.nonzero(hit)[0]
            coverage[name][row] = frozenset(int(p) for p in positions)
            lines.append(
                f"{name},{row}," + ";".join(str(int(p)) for p in positions)
            )
    lines_sorted = [lines[0]] + sorted(
        lines[1:], key=lambda s: (s.split(",")[0], int(s.split(",")[1]))
    )
    csv = "\n".join(lines_sorted) + "\n"

    strict = sum(
        1
        for row in coverage["random512"]
        if coverage["random512"][row] - coverage["repeated8"][row]
    )
    summary = {
        "profile": cfg.profile,
        "rows_tested": n_rows,
        "strict_superset_rows": strict,
        "avg_flips_repeated8": float(
            np.mean([len(s) for s in coverage["repeated8"].values()])
        ),
        "avg_flips_random512": float(
            np.mean([len(s) for s in coverage["random512"].values()])
        ),
    }
    table = "\n".join(
        [
            f"{'victim row':>12}{'repeated8':>12}{'random512':>12}{'extra':>8}",
            *(
                f"{row:>12}{len(coverage['repeated8'][row]):>12}"
                f"{len(coverage['random512'][row]):>12}"
                f"{len(coverage['random512'][row] - coverage['repeated8'][row]):>8}"
                for row in sorted(coverage["repeated8"])
            ),
            f"strict-superset rows: {strict}/{n_rows}",
        ]
    )
    return StudyResult(cfg, csv, summary, table, files={"study2.csv": csv})


# ---------------------------------------------------------------------------
# study 3 — reduced-timing majority BER grid


def run_study3(cfg: StudyConfig) -> StudyResult:
    geom, fault = _load_profile(cfg.profile)
    mj = fault.majority
    if mj is None or not mj.valid_timing_set:
        raise CalibrationMissing(
            f"profile {cfg.profile!r} has no multi-row-activation support"
        )
    n_seg = cfg.segments_tested
    eps_and, eps_or = faults.segment_epsilons(mj.segment_epsilon, cfg.seed, 0, n_seg)
    bitlines = geom.row_cells

    def is_valid(tras: float, trp: float) -> bool:
        return any(
            abs(tras - a) < 1e-9 and abs(trp - b) < 1e-9
            for a, b in mj.valid_timing_set
        )

    combos = [(tras, trp) for tras in cfg.timing_grid for trp in cfg.timing_grid]
    seg_ids = np.arange(n_seg)
    best = {"AND": np.ones(n_seg), "OR": np.ones(n_seg)}
    mean_valid = {"AND": [], "OR": []}
    chunks = []
    for ci, (tras, trp) in enumerate(combos):
        valid = is_valid(tras, trp)
        bers = {}
        for oi, (op, eps) in enumerate((("AND", eps_and), ("OR", eps_or))):
            if valid:
                rng = np.random.default_rng([cfg.seed, TAG_STUDY3_BER, ci, oi])
                ber = rng.binomial(bitlines, eps) / bitlines
                best[op] = np.minimum(best[op], ber)
                mean_valid[op].append(float(ber.mean()))
            else:
                ber = np.ones(n_seg)
            bers[op] = ber
        prefix = f"{tras:.1f},{trp:.1f},"
        chunks.append(
            "\n".join(
                f"{prefix}{s},AND,{a:.6f}\n{prefix}{s},OR,{o:.6f}"
                for s, a, o in zip(seg_ids, bers["AND"], bers["OR"])
            )
        )
    csv = "tras,trp,segment,op,ber\n" + "\n".join(chunks) + "\n"

    and_only_lt3 = int(np.sum((best["AND"] < 0.03) & (best["OR"] >= 0.03)))
    both_lt3 = int(np.sum((best["AND"] < 0.03) & (best["OR"] < 0.03)))
    both_lt5 = int(np.sum((best["AND"] < 0.05) & (best["OR"] < 0.05)))
    both_lt10 = int(np.sum((best["AND"] < 0.10) & (best["OR"] < 0.10)))
    summary = {
        "profile": cfg.profile,
        "segments_tested": n_seg,
        "valid_combos": [list(c) for c in combos if is_valid(*c)],
        "counts": {
            "and_only_lt3": and_only_lt3,
            "both_lt3": both_lt3,
            "both_lt5": both_lt5,
            "both_lt10": both_lt10,
        },
        "mean_ber_and": float(np.mean(mean_valid["AND"])),
        "mean_ber_or": float(np.mean(mean_valid["OR"])),
    }
    table = "\n".join(
        [
            f"valid (tRAS, tRP) combos: {sorted(summary['valid_combos'])}",
            f"AND-only BER < 3%:  {and_only_lt3:>5} segments",
            f"both BER < 5%:      {both_lt5:>5} segments",
            f"both BER < 10%:     {both_lt10:>5} segments",
            f"mean BER on valid combos: AND {summary['mean_ber_and']:.4f}, "
            f"OR {summary['mean_ber_or']:.4f}",
        ]
    )
    return StudyResult(cfg, csv, summary, table, files={"study3.csv": csv})


RUNNERS = {
    "interleave": run_study1,
    "data_pattern": run_study2,
    "majority": run_study3,
}


def run_study(cfg: StudyConfig) -> StudyResult:
    return RUNNERS[cfg.study](cfg)
