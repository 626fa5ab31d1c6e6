"""Error profiles: count accumulation from diffs, merging, normalisation, JSON I/O.

An accumulator holds raw integer counters and is the only thing that gets
merged.  :func:`finalize` turns it into an immutable :class:`ErrorProfile`
holding the normalised distributions used by the injector.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from .errors import ContextMismatch, EmptyAccumulator, InvariantViolation, SchemaVersionMismatch
from .formats import CATEGORIES, CATEGORY_CODES, Category, DType, admissible_categories, layout_of, parse_dtype
from .image import DEFAULT_WARP_SIZE, DiffRecord, DiffSet

SCHEMA_VERSION = 1
ACCUMULATOR_SCHEMA_VERSION = 1
SUM_TOL = 1e-9

_NS = CATEGORY_CODES[Category.NON_SPECIAL]


class HardwareUnit(str, Enum):
    CUDA_CORE_CONTROL1 = "CudaCoreControl1"
    CUDA_CORE_CONTROL2 = "CudaCoreControl2"
    TENSOR_CORE = "TensorCore"
    ALU = "ALU"
    L1_DATA = "L1Data"
    L1_MISS_HANDLER = "L1MissHandler"
    L1_TAG = "L1Tag"
    CUDA_CORE_IO = "CudaCoreIO"
    UNATTRIBUTED = "Unattributed"

    def __str__(self):
        return self.value

    @classmethod
    def parse(cls, value):
        if value is None or value == "":
            return cls.UNATTRIBUTED
        if isinstance(value, cls):
            return value
        for unit in cls:
            if value.lower() in (unit.value.lower(), unit.name.lower()):
                return unit
        raise ValueError(f"unknown hardware unit {value!r}")


@dataclass(frozen=True)
class ProfileContext:
    hardware_unit: HardwareUnit = HardwareUnit.UNATTRIBUTED
    dtype: DType = DType.FP32
    kernel: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "hardware_unit", HardwareUnit.parse(self.hardware_unit))
        object.__setattr__(self, "dtype", parse_dtype(self.dtype))

    def to_json(self):
        return {"unit": self.hardware_unit.value, "dtype": self.dtype.value, "kernel": self.kernel}

    @classmethod
    def from_json(cls, d):
        return cls(d.get("unit"), d["dtype"], d.get("kernel"))


# -- accumulator --------------------------------------------------------------

@dataclass
class ProfileAccumulator:
    context: ProfileContext
    warp_size: int = DEFAULT_WARP_SIZE
    element_total: int = 0
    category_counts: np.ndarray = None
    bit_position_counts: np.ndarray = None
    flip_count_counts: np.ndarray = None  # index k = number of flipped bits, 0 unused
    lane_counts: np.ndarray = None  # [category, lane]

    def __post_init__(self):
        width = layout_of(self.context.dtype).width_bits
        ncat = len(CATEGORIES)
        self.category_counts = _counts(self.category_counts, (ncat,))
        self.bit_position_counts = _counts(self.bit_position_counts, (width,))
        self.flip_count_counts = _counts(self.flip_count_counts, (width + 1,))
        self.lane_counts = _counts(self.lane_counts, (ncat, self.warp_size))

    @property
    def width(self) -> int:
        return layout_of(self.context.dtype).width_bits

    @property
    def corruption_total(self) -> int:
        return int(self.category_counts.sum())

    def copy(self) -> "ProfileAccumulator":
        return ProfileAccumulator(
            self.context, self.warp_size, self.element_total,
            self.category_counts.copy(), self.bit_position_counts.copy(),
            self.flip_count_counts.copy(), self.lane_counts.copy(),
        )

    def same_counts(self, other: "ProfileAccumulator") -> bool:
        return (
            self.context == other.context
            and self.warp_size == other.warp_size
            and self.element_total == other.element_total
            and np.array_equal(self.category_counts, other.category_counts)
            and np.array_equal(self.bit_position_counts, other.bit_position_counts)
            and np.array_equal(self.flip_count_counts, other.flip_count_counts)
            and np.array_equal(self.lane_counts, other.lane_counts)
        )

    __eq__ = same_counts

    def to_json(self):
        return {
            "schema_version": ACCUMULATOR_SCHEMA_VERSION,
            "kind": "accumulator",
            "context": self.context.to_json(),
            "warp_size": self.warp_size,
            "element_total": self.element_total,
            "category_counts": {c.value: int(self.category_counts[i]) for i, c in enumerate(CATEGORIES)},
            "bit_position_counts": self.bit_position_counts.tolist(),
            "flip_count_counts": self.flip_count_counts.tolist(),
            "lane_counts": {c.value: self.lane_counts[i].tolist() for i, c in enumerate(CATEGORIES)},
        }

    @classmethod
    def from_json(cls, d):
        if d.get("schema_version") != ACCUMULATOR_SCHEMA_VERSION:
            raise SchemaVersionMismatch(f"accumulator schema {d.get('schema_version')!r}")
        acc = cls(
            ProfileContext.from_json(d["context"]),
            int(d["warp_size"]),
            int(d["element_total"]),
            [d["category_counts"].get(c.value, 0) for c in CATEGORIES],
            d["bit_position_counts"],
            d["flip_count_counts"],
            [d["lane_counts"].get(c.value, [0] * int(d["warp_size"])) for c in CATEGORIES],
        )
        if (acc.category_counts < 0).any() or acc.element_total < acc.corruption_total:
            raise InvariantViolation("accumulator counts are inconsistent")
        if not np.array_equal(acc.lane_counts.sum(axis=1), acc.category_counts):
            raise InvariantViolation("lane counts do not add up to category counts")
        return acc


def _counts(value, shape):
    if value is None:
        return np.zeros(shape, dtype=np.int64)
    arr = np.array(value, dtype=np.int64)
    if arr.shape != shape:
        raise InvariantViolation(f"counter shape {arr.shape}, expected {shape}")
    return arr


def observe(acc: ProfileAccumulator, diffs: Union[DiffSet, Iterable[DiffRecord]],
            element_count: int) -> ProfileAccumulator:
    """Return a new accumulator with one image's diff folded in."""
    if not isinstance(diffs, DiffSet):
        diffs = _records_to_set(list(diffs), acc)
    if diffs.dtype != acc.context.dtype:
        raise ContextMismatch(f"diff dtype {diffs.dtype} vs profile dtype {acc.context.dtype}")
    if diffs.warp_size != acc.warp_size:
        raise ContextMismatch(f"diff warp size {diffs.warp_size} vs profile {acc.warp_size}")

    out = acc.copy()
    out.element_total += int(element_count)
    ncat = len(CATEGORIES)
    out.category_counts += np.bincount(diffs.category, minlength=ncat)
    np.add.at(out.lane_counts, (diffs.category.astype(np.intp), diffs.lane.astype(np.intp)), 1)

    ns = diffs.category == _NS
    if ns.any():
        out.flip_count_counts += np.bincount(diffs.flip_count[ns], minlength=out.width + 1)
        xor = diffs.xor[ns]
        wt = xor.dtype.type
        for b in range(out.width):
            out.bit_position_counts[b] += int(np.count_nonzero(xor & wt(1 << b)))
    return out


def _records_to_set(records, acc):
    if not records:
        return DiffSet.empty(acc.context.dtype, acc.warp_size)
    return DiffSet(
        acc.context.dtype, acc.warp_size,
        [r.element_index for r in records],
        [r.golden_bits for r in records],
        [r.corrupted_bits for r in records],
        [Category(r.category).code for r in records],
    )


def merge(a: ProfileAccumulator, b: ProfileAccumulator) -> ProfileAccumulator:
    if a.context != b.context or a.warp_size != b.warp_size:
        raise ContextMismatch(f"cannot merge {a.context}/W={a.warp_size} with {b.context}/W={b.warp_size}")
    return ProfileAccumulator(
        a.context, a.warp_size,
        a.element_total + b.element_total,
        a.category_counts + b.category_counts,
        a.bit_position_counts + b.bit_position_counts,
        a.flip_count_counts + b.flip_count_counts,
        a.lane_counts + b.lane_counts,
    )


# -- profile ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ErrorProfile:
    """Normalised statistical model of one (unit, dtype, kernel) context.

    ``count_dist[k]`` is the probability that a NonSpecial corruption flips
    exactly ``k`` bits (index 0 is always zero).  ``position_rate[b]`` is the
    probability that bit ``b`` flips given a NonSpecial corruption.  Both are
    ``None`` when no NonSpecial corruption backs the profile.  ``lane_weights``
    only has entries for categories that were observed.
    """

    context: ProfileContext
    corruption_rate: float
    category_dist: dict
    position_rate: Optional[np.ndarray]
    count_dist: Optional[np.ndarray]
    lane_weights: dict
    warp_size: int = DEFAULT_WARP_SIZE
    sample_count: int = 0

    def __post_init__(self):
        dist = {Category(c): float(v) for c, v in self.category_dist.items()}
        object.__setattr__(self, "category_dist", {c: dist.get(c, 0.0) for c in CATEGORIES})
        object.__setattr__(self, "lane_weights", {
            Category(c): _frozen(w) for c, w in self.lane_weights.items()
        })
        if self.position_rate is not None:
            object.__setattr__(self, "position_rate", _frozen(self.position_rate))
        if self.count_dist is not None:
            object.__setattr__(self, "count_dist", _frozen(self.count_dist))

    @property
    def width(self) -> int:
        return layout_of(self.context.dtype).width_bits

    def category_vector(self) -> np.ndarray:
        return np.array([self.category_dist[c] for c in CATEGORIES])

    def lane_matrix(self) -> np.ndarray:
        """``[category, lane]`` weights; unobserved categories get all-zero rows."""
        m = np.zeros((len(CATEGORIES), self.warp_size))
        for c, w in self.lane_weights.items():
            m[c.code] = w
        return m

    def validate(self) -> "ErrorProfile":
        width, W = self.width, self.warp_size
        if W < 1:
            raise InvariantViolation("warp_size must be >= 1")
        if not 0.0 <= self.corruption_rate <= 1.0:
            raise InvariantViolation(f"corruption_rate {self.corruption_rate} outside [0, 1]")
        cat = self.category_vector()
        if (cat < 0).any() or (cat > 1).any():
            raise InvariantViolation("category_dist entries must lie in [0, 1]")
        if abs(cat.sum() - 1.0) > SUM_TOL:
            raise InvariantViolation(f"category_dist sums to {cat.sum()!r}")
        allowed = admissible_categories(self.context.dtype)
        for c in CATEGORIES:
            if c not in allowed and self.category_dist[c] != 0.0:
                raise InvariantViolation(f"{c} has mass but is not encodable in {self.context.dtype}")

        if self.count_dist is not None:
            q = self.count_dist
            if q.shape != (width + 1,):
                raise InvariantViolation(f"count_dist has {q.shape[0]} entries, expected {width + 1}")
            if (q < 0).any() or (q > 1).any() or q[0] != 0.0:
                raise InvariantViolation("count_dist entries must lie in [0, 1] with no mass at k=0")
            if abs(q.sum() - 1.0) > SUM_TOL:
                raise InvariantViolation(f"count_dist sums to {q.sum()!r}")
        if self.position_rate is not None:
            p = self.position_rate
            if p.shape != (width,):
                raise InvariantViolation(f"position_rate has {p.shape[0]} entries, expected {width}")
            if (p < 0).any() or (p > 1).any():
                raise InvariantViolation("position_rate entries must lie in [0, 1]")
        if self.category_dist[Category.NON_SPECIAL] > 0 and self.count_dist is None:
            raise InvariantViolation("NonSpecial has mass but no count_dist")

        for c, w in self.lane_weights.items():
            if w.shape != (W,):
                raise InvariantViolation(f"{c} lane weights have {w.shape[0]} lanes, expected {W}")
            if (w < 0).any() or abs(w.sum() - 1.0) > SUM_TOL:
                raise InvariantViolation(f"{c} lane weights sum to {w.sum()!r}")
        for c in CATEGORIES:
            if self.category_dist[c] > 0 and c not in self.lane_weights:
                raise InvariantViolation(f"{c} has mass but no lane weights")
        return self

    def to_json(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "context": self.context.to_json(),
            "corruption_rate": self.corruption_rate,
            "category_dist": {c.value: self.category_dist[c] for c in CATEGORIES},
            "bit_model": {
                "position_rate": None if self.position_rate is None else self.position_rate.tolist(),
                "count_dist": None if self.count_dist is None else self.count_dist.tolist(),
            },
            "spatial_model": {c.value: w.tolist() for c, w in sorted(
                self.lane_weights.items(), key=lambda kv: kv[0].code)},
            "warp_size": self.warp_size,
            "sample_count": self.sample_count,
        }

    @classmethod
    def from_json(cls, d) -> "ErrorProfile":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise SchemaVersionMismatch(
                f"profile schema {d.get('schema_version')!r}, this build reads {SCHEMA_VERSION}")
        try:
            bm = d.get("bit_model") or {}
            prof = cls(
                context=ProfileContext.from_json(d["context"]),
                corruption_rate=float(d["corruption_rate"]),
                category_dist=d["category_dist"],
                position_rate=bm.get("position_rate"),
                count_dist=bm.get("count_dist"),
                lane_weights=d.get("spatial_model") or {},
                warp_size=int(d.get("warp_size", DEFAULT_WARP_SIZE)),
                sample_count=int(d.get("sample_count", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvariantViolation(f"malformed profile: {exc}") from exc
        return prof.validate()

    def content_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, ErrorProfile):
            return NotImplemented
        return self.to_json() == other.to_json()


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.flags.writeable = False
    return arr


def finalize(acc: ProfileAccumulator) -> ErrorProfile:
    total = acc.corruption_total
    if total < 1:
        raise EmptyAccumulator("no corruptions observed; the profile is undefined")
    counts = acc.category_counts
    dist = {c: counts[i] / total for i, c in enumerate(CATEGORIES)}
    ns = int(counts[_NS])
    if ns:
        position_rate = acc.bit_position_counts / ns
        count_dist = acc.flip_count_counts / acc.flip_count_counts.sum()
    else:
        position_rate = count_dist = None
    lanes = {
        c: acc.lane_counts[i] / counts[i]
        for i, c in enumerate(CATEGORIES) if counts[i] > 0
    }
    return ErrorProfile(
        context=acc.context,
        corruption_rate=total / acc.element_total,
        category_dist=dist,
        position_rate=position_rate,
        count_dist=count_dist,
        lane_weights=lanes,
        warp_size=acc.warp_size,
        sample_count=total,
    ).validate()


# -- files --------------------------------------------------------------------

def save_profile(profile: ErrorProfile, path) -> None:
    Path(path).write_text(json.dumps(profile.to_json(), indent=2) + "\n")


def load_profile(path) -> ErrorProfile:
    return ErrorProfile.from_json(json.loads(Path(path).read_text()))


def save_accumulator(acc: ProfileAccumulator, path) -> None:
    Path(path).write_text(json.dumps(acc.to_json(), indent=2) + "\n")


def load_accumulator(path) -> ProfileAccumulator:
    return ProfileAccumulator.from_json(json.loads(Path(path).read_text()))
