"""Fits disturbance-model parameters so the interleaving harness reproduces
target endpoint measurements, and constructs the in-array-majority error-rate
population from target support counts.

The closure, with the distance-1 weight fixed at w=1:

* the alternation bonus beta is found by bisection so the first-flip point at
  the widest interleave lands on target, given that the T=1 first-flip point
  pins the threshold floor (accumulated disturbance at the target crossing);
* the threshold floor is then confirmed/refined by bisection against the T=1
  target;
* the log-normal spread (shape, median) has a closed form from the two
  flip-count targets, which are tail quantiles of the threshold distribution
  at the two endpoint accumulator values.

Fitted profiles set ``pin_min_threshold`` so each row's weakest cell sits at
the documented floor — the floor is an attained first-flip level, which is
what makes the first-flip targets reproducible rather than distribution-tail
luck."""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

from .faults import (
    EpsilonGroup,
    MajorityParams,
    RowHammerParams,
    SegmentEpsilonSpec,
    ThresholdDistribution,
    hammer_accumulator,
)

_NORMAL = NormalDist()

# Slack applied to threshold-crossing comparisons: the fitted parameters put
# target crossings exactly on the boundary, where bare float equality is
# unreliable.
CROSS_SLACK = 1e-6

_SEARCH_LIMIT = 1 << 42
_BISECT_ITERS = 100


class FitDiverged(Exception):
    """Targets unreachable within the model's parameter bounds."""


@dataclass(frozen=True)
class HammerTargets:
    """Endpoint numbers one profile must reproduce on the sandwiched victim."""

    flips_t1: float  # average flips per victim row, full budget, T=1
    flips_tmax: float  # same at T=t_max
    hc_first_t1: int  # ACTs per aggressor to the first flip, T=1
    hc_first_tmax: int
    t_max: int = 65536
    total_acts: int = 1 << 20
    cells_per_row: int = 65536
    gate_match_fraction: float = 0.125  # 1-in-8 data-pattern gates match


SHIPPED_TARGETS = {
    "mfrA": HammerTargets(314.8, 31.9, 99_000, 130_000),
    "mfrB": HammerTargets(50.7, 9.9, 80_000, 108_000),
    "mfrC": HammerTargets(604.9, 71.2, 16_000, 23_000),
}

MAJORITY_TIMING_SET = ((1.5, 1.5), (1.5, 3.0), (3.0, 1.5))
MAJORITY_SUPPORT_COUNTS = (35, 160, 4546)  # AND-only <3%, both <5%, both <10%


# ---------------------------------------------------------------------------
# first-flip search over the accumulator closed form


def first_crossing(
    threshold: float, t_per_side: int, w: float, beta: float, limit: int
) -> int | None:
    """Smallest total ACT count whose accumulated disturbance reaches
    ``threshold``, or None when ``limit`` activations are not enough."""

    def reached(n: int) -> bool:
        return hammer_accumulator(n, t_per_side, w, beta) >= threshold - CROSS_SLACK

    if threshold <= CROSS_SLACK:
        return 0
    if not reached(limit):
        return None
    lo, hi = 0, 1
    while not reached(hi):
        lo, hi = hi, min(2 * hi, limit)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if reached(mid):
            hi = mid
        else:
            lo = mid
    return hi


def hc_first(
    threshold: float, t_per_side: int, w: float, beta: float, limit: int
) -> int | None:
    """First-flip point in ACTs per aggressor (half the total schedule)."""
    n = first_crossing(threshold, t_per_side, w, beta, limit)
    return None if n is None else (n + 1) // 2


# ---------------------------------------------------------------------------
# disturbance fit


def _edge(measure, level: int, lo: float, hi: float) -> float:
    """Smallest parameter value where the integer-valued, nondecreasing
    ``measure`` first reaches ``level`` (bisection; bracket must straddle)."""
    a, b = lo, hi
    for _ in range(_BISECT_ITERS):
        mid = (a + b) / 2
        if measure(mid) >= level:
            b = mid
        else:
            a = mid
    return b


def _fit_beta(tg: HammerTargets, w: float) -> float:
    """Bisect the alternation bonus against the first-flip point at the
    widest interleave, with the floor slaved to the T=1 first-flip target."""

    def measured(beta: float) -> int:
        floor = hammer_accumulator(2 * tg.hc_first_t1, 1, w, beta)
        h = hc_first(floor, tg.t_max, w, beta, _SEARCH_LIMIT)
        return _SEARCH_LIMIT if h is None else h

    if measured(0.0) > tg.hc_first_tmax:
        raise FitDiverged(
            "hc_first at maximum interleave is below the T=1 point even "
            "with no alternation bonus"
        )
    hi = 1.0
    while measured(hi) <= tg.hc_first_tmax:
        hi *= 2
        if hi > 1e9:
            raise FitDiverged("no alternation bonus reaches the hc_first spread")
    lower = _edge(measured, tg.hc_first_tmax, 0.0, hi)
    upper = _edge(measured, tg.hc_first_tmax + 1, 0.0, hi)
    return (lower + upper) / 2


def _fit_threshold_floor(tg: HammerTargets, w: float, beta: float) -> float:
    """Bisect the threshold floor into the intersection of the two
    first-flip plateaus (the floor moves both endpoints; beta is fixed)."""

    def at_t1(floor: float) -> int:
        h = hc_first(floor, 1, w, beta, _SEARCH_LIMIT)
        return _SEARCH_LIMIT if h is None else h

    def at_tmax(floor: float) -> int:
        h = hc_first(floor, tg.t_max, w, beta, _SEARCH_LIMIT)
        return _SEARCH_LIMIT if h is None else h

    hi = 1.0
    while at_t1(hi) <= tg.hc_first_t1 or at_tmax(hi) <= tg.hc_first_tmax:
        hi *= 2
        if hi > 1e15:
            raise FitDiverged("threshold floor diverged")
    lower = max(
        _edge(at_t1, tg.hc_first_t1, 0.0, hi),
        _edge(at_tmax, tg.hc_first_tmax, 0.0, hi),
    )
    upper = min(
        _edge(at_t1, tg.hc_first_t1 + 1, 0.0, hi),
        _edge(at_tmax, tg.hc_first_tmax + 1, 0.0, hi),
    )
    if not lower < upper:
        raise FitDiverged("first-flip plateaus at T=1 and T=max do not intersect")
    return (lower + upper) / 2


def _fit_spread(
    tg: HammerTargets, w: float, beta: float, floor: float
) -> tuple[float, float]:
    """(shape, median) from the two flip-count quantile equations."""
    eligible = tg.cells_per_row * tg.gate_match_fraction
    p1 = tg.flips_t1 / eligible
    p2 = tg.flips_tmax / eligible
    if not 0 < p2 < p1 < 1:
        raise FitDiverged(
            f"flip targets must satisfy 0 < f_tmax < f_t1 < {eligible:g} "
            f"eligible cells, got {tg.flips_t1} and {tg.flips_tmax}"
        )
    acc1 = hammer_accumulator(tg.total_acts, 1, w, beta)
    acc2 = hammer_accumulator(tg.total_acts, tg.t_max, w, beta)
    if acc2 <= floor:
        raise FitDiverged("full-budget accumulation never exceeds the floor")
    z1 = _NORMAL.inv_cdf(p1)
    z2 = _NORMAL.inv_cdf(p2)
    sigma = (math.log(acc1 - floor) - math.log(acc2 - floor)) / (z1 - z2)
    mu = math.log(acc1 - floor) - sigma * z1
    return sigma, floor + math.exp(mu)


def expected_flips(
    params: RowHammerParams,
    acc: float,
    cells_per_row: int = 65536,
    gate_match_fraction: float = 0.125,
) -> float:
    """Expected flip count on one victim row at a given accumulator value."""
    dist = params.thresholds
    if acc < dist.min or dist.shape <= 0:
        return 0.0
    z = (math.log(acc - dist.min) - math.log(dist.median - dist.min)) / dist.shape
    return cells_per_row * gate_match_fraction * _NORMAL.cdf(z)


def calibrate_rowhammer(
    tg: HammerTargets, distance2_weight_ratio: float = 0.25
) -> RowHammerParams:
    """Fit (beta, threshold floor, shape, median) with w = 1; raises
    FitDiverged when the targets are inconsistent with the model."""
    w = 1.0
    if tg.hc_first_tmax <= tg.hc_first_t1:
        raise FitDiverged(
            "interleaving must delay the first flip: "
            f"hc_first {tg.hc_first_tmax} at T={tg.t_max} is not above "
            f"{tg.hc_first_t1} at T=1"
        )
    if tg.flips_tmax >= tg.flips_t1:
        raise FitDiverged(
            "interleaving must reduce flips: "
            f"{tg.flips_tmax} at T={tg.t_max} is not below {tg.flips_t1} at T=1"
        )
    if 2 * tg.hc_first_tmax > tg.total_acts:
        raise FitDiverged("hc_first target beyond the activation budget")

    beta = _fit_beta(tg, w)
    floor = _fit_threshold_floor(tg, w, beta)
    sigma, median = _fit_spread(tg, w, beta, floor)
    params = RowHammerParams(
        base_disturb=w,
        alternation_bonus=beta,
        distance2_weight_ratio=distance2_weight_ratio,
        thresholds=ThresholdDistribution(min=floor, median=median, shape=sigma),
        gate_enabled=True,
        pin_min_threshold=True,
    )

    # post-fit check: both first-flip points exact, both flip counts on target
    for t, h_target in ((1, tg.hc_first_t1), (tg.t_max, tg.hc_first_tmax)):
        got = hc_first(floor, t, w, beta, tg.total_acts)
        if got != h_target:
            raise FitDiverged(f"post-fit hc_first at T={t}: {got} != {h_target}")
    for t, f_target in ((1, tg.flips_t1), (tg.t_max, tg.flips_tmax)):
        acc = hammer_accumulator(tg.total_acts, t, w, beta)
        got = expected_flips(params, acc, tg.cells_per_row, tg.gate_match_fraction)
        if abs(got - f_target) > 0.001 * f_target:
            raise FitDiverged(f"post-fit flips at T={t}: {got:.3f} != {f_target}")
    return params


# ---------------------------------------------------------------------------
# majority-population fit


def fit_majority_spec(
    counts: tuple[int, int, int] = MAJORITY_SUPPORT_COUNTS,
    total_segments: int = 8192,
    asymmetric_tail: int = 1500,
) -> SegmentEpsilonSpec:
    """Group-constructed error-rate population reproducing the three support
    counts exactly: (AND-only < 3%, both < 5%, both < 10%).

    The error-rate boxes keep >= 0.2-percentage-point margins around each
    counting threshold so per-bitline sampling noise cannot move a segment
    across; the seed only permutes which segment index lands in which group.
    ``asymmetric_tail`` sizes the group supporting AND below 10% while OR is
    above it."""
    c3_and_only, c5_both, c10_both = counts
    mid = c10_both - c3_and_only - c5_both
    tail = total_segments - c10_both
    if min(c3_and_only, c5_both, mid) < 0:
        raise FitDiverged(f"support counts must nest: {counts}")
    if not 0 <= asymmetric_tail <= tail:
        raise FitDiverged(
            f"counts cover {c10_both} of {total_segments} segments, "
            f"leaving no room for an asymmetric tail of {asymmetric_tail}"
        )
    groups = (
        EpsilonGroup(c3_and_only, (0.019, 0.028), (0.06, 0.095)),
        EpsilonGroup(c5_both, (0.032, 0.048), (0.032, 0.048)),
        EpsilonGroup(mid, (0.052, 0.098), (0.052, 0.098)),
        EpsilonGroup(asymmetric_tail, (0.052, 0.098), (0.105, 0.3)),
        EpsilonGroup(tail - asymmetric_tail, (0.105, 0.3), (0.105, 0.3)),
    )
    return SegmentEpsilonSpec(groups=groups, pin_min_and=0.019)


def calibrated_fault_model(
    profile: str,
    seed: int = 0,
    targets: HammerTargets | None = None,
) -> dict:
    """Full fault-model document for one shipped profile id."""
    if targets is None:
        try:
            targets = SHIPPED_TARGETS[profile]
        except KeyError:
            raise FitDiverged(
                f"no shipped targets for {profile!r}; pass targets explicitly"
            ) from None
    rowhammer = calibrate_rowhammer(targets)
    majority = None
    if profile == "mfrB":
        majority = MajorityParams(
            valid_timing_set=MAJORITY_TIMING_SET,
            segment_epsilon=fit_majority_spec(),
        )
    doc = {
        "seed": seed,
        "rowhammer": rowhammer.to_dict(),
        "majority": None if majority is None else majority.to_dict(),
        "retention": None,
        "temperature_c": 45.0,
    }
    return doc
