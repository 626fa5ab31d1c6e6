"""Built-in error profiles used as test substrate and as injection presets.

Headline numbers come from the published gate-level campaign: category shares
over ~600M observed corruptions (nullified 50.68%, non-special 48.31%,
NaN 0.39%, +INF 0.49%, -INF 0.13%), a single-bit share below 40% of
non-special corruptions, flip rates falling from LSB to MSB with exponent
bits least affected, and period-8 (non-special) / period-16 (nullified) lane
structure for L1 miss-handler faults.  Exact per-position and per-count
shapes were only published as plots, so the arrays here are synthetic curves
shaped to match those qualitative claims.
"""
from __future__ import annotations

import numpy as np

from ..errors import UnknownFixture
from ..formats import Category, DType, layout_of
from ..profile import ErrorProfile, HardwareUnit, ProfileContext

AGGREGATE_SHARES = {
    Category.NULLIFIED: 0.5068,
    Category.NON_SPECIAL: 0.4831,
    Category.NAN: 0.0039,
    Category.PLUS_INF: 0.0049,
    Category.MINUS_INF: 0.0013,
}
AGGREGATE_OBSERVATIONS = 600_000_000
SINGLE_BIT_SHARE = 0.38


def multibit_count_dist(width: int, single: float = SINGLE_BIT_SHARE, mode: float = 6.0,
                        spread: float = 2.5, kmax: int = 16) -> np.ndarray:
    """Single-bit peak plus a Gaussian-shaped mode over intermediate flip counts."""
    q = np.zeros(width + 1)
    ks = np.arange(2, min(kmax, width) + 1)
    bump = np.exp(-0.5 * ((ks - mode) / spread) ** 2)
    q[ks] = (1.0 - single) * bump / bump.sum()
    q[1] = single
    return q / q.sum()


def decaying_position_rate(dtype, expected_flips: float, decay: float = 12.0,
                           exponent_scale: float = 0.05) -> np.ndarray:
    """Per-bit flip rate falling from LSB to MSB; exponent and sign bits damped.

    Scaled so the rates sum to ``expected_flips`` (the mean flip count),
    which is what a count-consistent bit model requires.
    """
    lay = layout_of(dtype)
    b = np.arange(lay.width_bits)
    shape = np.exp(-b / decay)
    if lay.is_float:
        damped = np.zeros(lay.width_bits, dtype=bool)
        lo, hi = lay.exponent_bits
        damped[lo:hi + 1] = True
        damped[lay.sign_bit] = True
        shape = np.where(damped, shape * exponent_scale, shape)
    p = shape * expected_flips / shape.sum()
    if p.max() > 1:
        raise ValueError("position rates exceed 1; lower expected_flips or flatten the decay")
    return p


def strictly_decreasing_rate(width: int, decay: float = 6.0) -> np.ndarray:
    p = np.exp(-np.arange(width) / decay)
    return p / p.sum()


def _uniform_lanes(categories, warp_size=32):
    return {c: np.full(warp_size, 1.0 / warp_size) for c in categories}


def _lanes_on(stride: int, warp_size=32):
    w = np.zeros(warp_size)
    w[::stride] = 1.0
    return w / w.sum()


def _aggregate(dtype, unit=HardwareUnit.UNATTRIBUTED, rate=0.1, mode=6.0):
    dtype = DType(dtype)
    width = layout_of(dtype).width_bits
    shares = dict(AGGREGATE_SHARES)
    if not layout_of(dtype).is_float:
        # integer outputs cannot hold special values; renormalise the rest
        total = shares[Category.NULLIFIED] + shares[Category.NON_SPECIAL]
        shares = {Category.NULLIFIED: shares[Category.NULLIFIED] / total,
                  Category.NON_SPECIAL: shares[Category.NON_SPECIAL] / total}
    q = multibit_count_dist(width, mode=mode)
    mean_k = float((np.arange(width + 1) * q).sum())
    return ErrorProfile(
        context=ProfileContext(unit, dtype, "paper-aggregate"),
        corruption_rate=rate,
        category_dist=shares,
        position_rate=decaying_position_rate(dtype, mean_k, decay=width / 2.7),
        count_dist=q,
        lane_weights=_uniform_lanes(shares),
        sample_count=AGGREGATE_OBSERVATIONS,
    )


def _nonspecial_only(base: ErrorProfile, rate=0.5, name="nonspecial"):
    return ErrorProfile(
        context=ProfileContext(base.context.hardware_unit, base.context.dtype, name),
        corruption_rate=rate,
        category_dist={Category.NON_SPECIAL: 1.0},
        position_rate=base.position_rate,
        count_dist=base.count_dist,
        lane_weights=_uniform_lanes([Category.NON_SPECIAL], base.warp_size),
        sample_count=0,
    )


def _monotone_fp32():
    width = 32
    q = np.zeros(width + 1)
    q[1] = 1.0
    return ErrorProfile(
        context=ProfileContext(HardwareUnit.UNATTRIBUTED, DType.FP32, "lsb-msb-monotone"),
        corruption_rate=0.5,
        category_dist={Category.NON_SPECIAL: 1.0},
        position_rate=strictly_decreasing_rate(width),
        count_dist=q,
        lane_weights=_uniform_lanes([Category.NON_SPECIAL]),
        sample_count=0,
    )


def _l1miss_period8():
    base = _aggregate(DType.FP32)
    return ErrorProfile(
        context=ProfileContext(HardwareUnit.L1_MISS_HANDLER, DType.FP32, "l1miss-period8"),
        corruption_rate=0.08,
        category_dist={Category.NULLIFIED: 0.4, Category.NON_SPECIAL: 0.6},
        position_rate=base.position_rate,
        count_dist=base.count_dist,
        lane_weights={Category.NON_SPECIAL: _lanes_on(8), Category.NULLIFIED: _lanes_on(16)},
        sample_count=0,
    )


FIXTURES = {
    "paper-aggregate-fp32": lambda: _aggregate(DType.FP32),
    "paper-aggregate-fp16": lambda: _aggregate(DType.FP16, mode=4.0),
    "paper-aggregate-uint32": lambda: _aggregate(DType.UINT32),
    "paper-nonspecial-fp32": lambda: _nonspecial_only(_aggregate(DType.FP32), name="paper-nonspecial"),
    "lsb-msb-monotone-fp32": _monotone_fp32,
    "l1miss-period8-nonspecial": _l1miss_period8,
}


def fixture_names() -> list[str]:
    return sorted(FIXTURES)


def fixture_profile(name: str) -> ErrorProfile:
    try:
        build = FIXTURES[name]
    except KeyError:
        raise UnknownFixture(f"unknown fixture {name!r}; known: {', '.join(fixture_names())}") from None
    return build().validate()
