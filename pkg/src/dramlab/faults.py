"""Parametric fault models: disturbance accumulators, in-array majority,
and retention decay.

All randomness is derived from ``numpy.random.default_rng`` seeded with
``[seed, stream_tag, coordinates...]`` so that every sampled quantity is a
pure function of the configuration seed and its location — devices can be
re-instantiated anywhere and agree bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Seed-stream tags (second SeedSequence word).
TAG_THRESHOLD = 1
TAG_GATE = 2
TAG_EPSILON = 3
TAG_MAJ_DRAW = 4
TAG_RETENTION = 5
TAG_ANTI_CELL = 6


# ---------------------------------------------------------------------------
# bit-layout helpers (LSB-first within each byte, cell 0 = byte 0 bit 0)


def unpack_bits(packed: np.ndarray) -> np.ndarray:
    return np.unpackbits(packed, bitorder="little")


def pack_bits(bits: np.ndarray) -> np.ndarray:
    return np.packbits(bits, bitorder="little")


def window_patterns(bits, offsets=(-4, 0, 4), transfer_bits=512) -> np.ndarray:
    """Per-cell neighborhood code: for cell i, the bits at i+offset for each
    offset (wrapping within the cell's transfer), folded MSB-first into one
    integer per cell."""
    grid = np.asarray(bits, dtype=np.uint8).reshape(-1, transfer_bits)
    out = np.zeros(grid.shape, dtype=np.uint8)
    for off in offsets:
        out = (out << 1) | np.roll(grid, -off, axis=1)
    return out.reshape(-1)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ThresholdDistribution:
    """Shifted log-normal: ``min + LogNormal(ln(median - min), shape)``."""

    min: float
    median: float
    shape: float

    def __post_init__(self) -> None:
        if self.min < 0 or self.median <= self.min:
            raise ValueError(
                f"threshold distribution needs 0 <= min < median, "
                f"got min={self.min} median={self.median}"
            )
        if self.shape < 0:
            raise ValueError(f"negative shape {self.shape}")

    @property
    def mu(self) -> float:
        return math.log(self.median - self.min)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.min + rng.lognormal(self.mu, self.shape, n)

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdDistribution":
        return cls(float(d["min"]), float(d["median"]), float(d["shape"]))

    def to_dict(self) -> dict:
        return {"min": self.min, "median": self.median, "shape": self.shape}


@dataclass(frozen=True)
class RowHammerParams:
    base_disturb: float  # w: accumulator increment for distance-1 victims
    alternation_bonus: float  # beta: extra increment on aggressor alternation
    distance2_weight_ratio: float  # rho: distance-2 increment = w * rho
    thresholds: ThresholdDistribution
    gate_enabled: bool = True
    gate_offsets: tuple[int, ...] = (-4, 0, 4)
    pin_min_threshold: bool = False  # one cell per row at exactly thresholds.min

    def __post_init__(self) -> None:
        if self.base_disturb < 0 or self.alternation_bonus < 0:
            raise ValueError("disturb weights must be non-negative")
        if not 0 <= self.distance2_weight_ratio < 1:
            raise ValueError(
                f"distance2_weight_ratio {self.distance2_weight_ratio} not in [0, 1)"
            )

    @classmethod
    def from_dict(cls, d: dict) -> "RowHammerParams":
        return cls(
            base_disturb=float(d["base_disturb"]),
            alternation_bonus=float(d["alternation_bonus"]),
            distance2_weight_ratio=float(d.get("distance2_weight_ratio", 0.25)),
            thresholds=ThresholdDistribution.from_dict(d["thresholds"]),
            gate_enabled=bool(d.get("gate_enabled", True)),
            gate_offsets=tuple(d.get("gate_offsets", (-4, 0, 4))),
            pin_min_threshold=bool(d.get("pin_min_threshold", False)),
        )

    def to_dict(self) -> dict:
        return {
            "base_disturb": self.base_disturb,
            "alternation_bonus": self.alternation_bonus,
            "distance2_weight_ratio": self.distance2_weight_ratio,
            "thresholds": self.thresholds.to_dict(),
            "gate_enabled": self.gate_enabled,
            "gate_offsets": list(self.gate_offsets),
            "pin_min_threshold": self.pin_min_threshold,
        }


@dataclass(frozen=True)
class EpsilonGroup:
    """One block of segments with error rates drawn uniformly from a box."""

    count: int
    and_range: tuple[float, float]
    or_range: tuple[float, float]

    def __post_init__(self) -> None:
        for lo, hi in (self.and_range, self.or_range):
            if not (0 <= lo <= hi <= 1):
                raise ValueError(f"bad epsilon range [{lo}, {hi}]")
        if self.count < 0:
            raise ValueError("negative group count")


@dataclass(frozen=True)
class SegmentEpsilonSpec:
    groups: tuple[EpsilonGroup, ...]
    pin_min_and: float | None = None

    @property
    def total(self) -> int:
        return sum(g.count for g in self.groups)

    @classmethod
    def from_dict(cls, d: dict) -> "SegmentEpsilonSpec":
        groups = tuple(
            EpsilonGroup(
                count=int(g["count"]),
                and_range=(float(g["and"][0]), float(g["and"][1])),
                or_range=(float(g["or"][0]), float(g["or"][1])),
            )
            for g in d["groups"]
        )
        pin = d.get("pin_min_and")
        return cls(groups, None if pin is None else float(pin))

    def to_dict(self) -> dict:
        return {
            "groups": [
                {"count": g.count, "and": list(g.and_range), "or": list(g.or_range)}
                for g in self.groups
            ],
            "pin_min_and": self.pin_min_and,
        }


@dataclass(frozen=True)
class MajorityParams:
    valid_timing_set: tuple[tuple[float, float], ...]  # (tRAS_ns, tRP_ns) combos
    segment_epsilon: SegmentEpsilonSpec | None = None
    tras_threshold_ns: float = 4.5  # classification metadata, not the trigger
    trp_threshold_ns: float = 4.5

    def __post_init__(self) -> None:
        if self.valid_timing_set and self.segment_epsilon is None:
            raise ValueError("valid_timing_set set but no segment_epsilon spec")

    @classmethod
    def from_dict(cls, d: dict) -> "MajorityParams":
        spec = d.get("segment_epsilon")
        return cls(
            valid_timing_set=tuple(
                (float(a), float(b)) for a, b in d.get("valid_timing_set", ())
            ),
            segment_epsilon=None if spec is None else SegmentEpsilonSpec.from_dict(spec),
            tras_threshold_ns=float(d.get("tras_threshold_ns", 4.5)),
            trp_threshold_ns=float(d.get("trp_threshold_ns", 4.5)),
        )

    def to_dict(self) -> dict:
        return {
            "valid_timing_set": [list(c) for c in self.valid_timing_set],
            "segment_epsilon": (
                None if self.segment_epsilon is None else self.segment_epsilon.to_dict()
            ),
            "tras_threshold_ns": self.tras_threshold_ns,
            "trp_threshold_ns": self.trp_threshold_ns,
        }


@dataclass(frozen=True)
class RetentionParams:
    t_ret_ns: ThresholdDistribution
    anti_cell_fraction: float = 0.5

    def __post_init__(self) -> None:
        if not 0 <= self.anti_cell_fraction <= 1:
            raise ValueError(f"anti_cell_fraction {self.anti_cell_fraction}")

    @classmethod
    def from_dict(cls, d: dict) -> "RetentionParams":
        return cls(
            t_ret_ns=ThresholdDistribution.from_dict(d["t_ret_ns"]),
            anti_cell_fraction=float(d.get("anti_cell_fraction", 0.5)),
        )

    def to_dict(self) -> dict:
        return {
            "t_ret_ns": self.t_ret_ns.to_dict(),
            "anti_cell_fraction": self.anti_cell_fraction,
        }


@dataclass(frozen=True)
class FaultModelConfig:
    seed: int = 0
    rowhammer: RowHammerParams | None = None
    majority: MajorityParams | None = None
    retention: RetentionParams | None = None
    temperature_c: float = 45.0

    @classmethod
    def from_dict(cls, d: dict | None) -> "FaultModelConfig":
        d = d or {}
        rh = d.get("rowhammer")
        mj = d.get("majority")
        rt = d.get("retention")
        return cls(
            seed=int(d.get("seed", 0)),
            rowhammer=None if rh is None else RowHammerParams.from_dict(rh),
            majority=None if mj is None else MajorityParams.from_dict(mj),
            retention=None if rt is None else RetentionParams.from_dict(rt),
            temperature_c=float(d.get("temperature_c", 45.0)),
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "rowhammer": None if self.rowhammer is None else self.rowhammer.to_dict(),
            "majority": None if self.majority is None else self.majority.to_dict(),
            "retention": None if self.retention is None else self.retention.to_dict(),
            "temperature_c": self.temperature_c,
        }


# ---------------------------------------------------------------------------
# deterministic per-location samplers


def cell_thresholds(
    dist: ThresholdDistribution,
    seed: int,
    bank: int,
    row: int,
    n_cells: int,
    pin_min: bool = False,
) -> np.ndarray:
    """Per-cell disturbance thresholds for one row.

    With ``pin_min`` the row's weakest cell sits exactly at the
    distribution minimum (at a seeded position), so the documented minimum
    is an attained first-flip level rather than an open bound."""
    rng = np.random.default_rng([seed, TAG_THRESHOLD, bank, row])
    th = dist.sample(rng, n_cells)
    if pin_min and n_cells:
        th[rng.integers(n_cells)] = dist.min
    return th


def cell_gates(seed: int, bank: int, row: int, n_cells: int, n_patterns: int = 8):
    rng = np.random.default_rng([seed, TAG_GATE, bank, row])
    return rng.integers(0, n_patterns, size=n_cells, dtype=np.uint8)


def retention_times(
    dist: ThresholdDistribution, seed: int, bank: int, row: int, n_cells: int
) -> np.ndarray:
    rng = np.random.default_rng([seed, TAG_RETENTION, bank, row])
    return dist.sample(rng, n_cells)


def anti_cell_mask(
    fraction: float, seed: int, bank: int, row: int, n_cells: int
) -> np.ndarray:
    rng = np.random.default_rng([seed, TAG_ANTI_CELL, bank, row])
    return rng.random(n_cells) < fraction


def segment_epsilons(
    spec: SegmentEpsilonSpec, seed: int, bank: int, n_segments: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-segment (eps_and, eps_or) arrays for one bank.

    Each group's segments draw one value from each range; the pair is then
    ordered so eps_and <= eps_or (identity for disjoint ranges).  Group
    sizes are exact; the seed only shuffles which segment index lands in
    which group.
    """
    if spec.total != n_segments:
        raise ValueError(
            f"epsilon groups cover {spec.total} segments, device has {n_segments}"
        )
    rng = np.random.default_rng([seed, TAG_EPSILON, bank])
    and_parts, or_parts = [], []
    for g in spec.groups:
        a = rng.uniform(g.and_range[0], g.and_range[1], g.count)
        b = rng.uniform(g.or_range[0], g.or_range[1], g.count)
        and_parts.append(np.minimum(a, b))
        or_parts.append(np.maximum(a, b))
    eps_and = np.concatenate(and_parts) if and_parts else np.empty(0)
    eps_or = np.concatenate(or_parts) if or_parts else np.empty(0)
    if spec.pin_min_and is not None and n_segments:
        eps_and[0] = spec.pin_min_and
    perm = rng.permutation(n_segments)
    out_and = np.empty_like(eps_and)
    out_or = np.empty_like(eps_or)
    out_and[perm] = eps_and
    out_or[perm] = eps_or
    if not (out_and <= out_or).all():
        raise ValueError("constructed epsilons violate eps_and <= eps_or")
    return out_and, out_or


# ---------------------------------------------------------------------------
# disturbance accumulator closed forms


def alternation_events(n_acts: int, t_per_side: int) -> int:
    """Aggressor alternations in n_acts issued as alternating blocks of
    t_per_side activations: every block boundary after the first block."""
    if n_acts <= 0:
        return 0
    return math.ceil(n_acts / t_per_side) - 1


def hammer_accumulator(n_acts: int, t_per_side: int, w: float, beta: float) -> float:
    """Sandwiched-victim accumulator after n_acts total double-sided
    activations in alternating blocks of t_per_side."""
    return n_acts * w + alternation_events(n_acts, t_per_side) * beta


# ---------------------------------------------------------------------------
# majority (multi-row activation) value computation


def majority_bits(row0, row1, row2) -> np.ndarray:
    total = row0.astype(np.uint8) + row1 + row2
    return (total >= 2).astype(np.uint8)


def select_epsilon(row0_bits, row1_bits, eps_and: float, eps_or: float) -> float:
    """Error rate for a triggered segment given current row contents."""
    if not row0_bits.any():
        return eps_and
    if row1_bits.all():
        return eps_or
    return max(eps_and, eps_or)


def apply_complement_errors(
    bits: np.ndarray, eps: float, rng: np.random.Generator
) -> np.ndarray:
    if eps <= 0:
        return bits
    return np.where(rng.random(bits.shape) < eps, 1 - bits, bits).astype(np.uint8)
