"""Memory images, bit-exact file I/O, golden/corrupted diffing and run outcomes.

Addresses are element indices.  Payload files are raw little-endian words;
metadata lives next to them in a ``<name>.img.meta`` key=value sidecar.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from . import _threads
from .errors import ShapeMismatch, SizeMismatch, UnknownDtype
from .formats import CATEGORIES, Category, DType, classify_words, layout_of, parse_dtype, popcount

DEFAULT_WARP_SIZE = 32
DEFAULT_WINDOW = 1 << 21  # elements per streaming diff window


@dataclass(frozen=True)
class ImageMeta:
    benchmark_id: str = ""
    hardware_unit: Optional[str] = None
    warp_size: int = DEFAULT_WARP_SIZE
    source: str = ""

    def __post_init__(self):
        if self.warp_size < 1:
            raise ValueError(f"warp_size must be >= 1, got {self.warp_size}")


@dataclass(frozen=True, eq=False)
class MemoryImage:
    """A contiguous output buffer of raw words of one format."""

    dtype: DType
    data: np.ndarray
    meta: ImageMeta = field(default_factory=ImageMeta)

    def __post_init__(self):
        dtype = parse_dtype(self.dtype)
        object.__setattr__(self, "dtype", dtype)
        word = layout_of(dtype).word_dtype
        data = self.data
        if not (isinstance(data, np.ndarray) and data.dtype == word and data.ndim == 1):
            data = np.ascontiguousarray(np.asarray(data).reshape(-1), dtype=word)
        if data.flags.writeable:
            data = data.copy()
            data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @classmethod
    def from_values(cls, values, dtype, meta=None):
        """Wrap numpy float/int values, reinterpreting their bits as words."""
        lay = layout_of(dtype)
        values = np.ascontiguousarray(values).reshape(-1)
        if values.dtype.itemsize != lay.nbytes:
            raise ValueError(f"{values.dtype} values cannot hold {lay.dtype} words")
        return cls(lay.dtype, values.view(lay.word_dtype), meta or ImageMeta())

    @property
    def element_count(self) -> int:
        return int(self.data.shape[0])

    @property
    def warp_size(self) -> int:
        return self.meta.warp_size

    @property
    def nbytes(self) -> int:
        return self.element_count * layout_of(self.dtype).nbytes

    def with_data(self, data) -> "MemoryImage":
        return MemoryImage(self.dtype, data, self.meta)

    def with_meta(self, **changes) -> "MemoryImage":
        return MemoryImage(self.dtype, self.data, replace(self.meta, **changes))

    def __eq__(self, other):
        if not isinstance(other, MemoryImage):
            return NotImplemented
        return (
            self.dtype == other.dtype
            and self.meta == other.meta
            and np.array_equal(self.data, other.data)
        )

    def __repr__(self):
        return f"MemoryImage({self.dtype}, n={self.element_count}, W={self.warp_size})"


# -- file I/O -----------------------------------------------------------------

def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta")


def read_sidecar(path) -> dict[str, str]:
    out = {}
    p = sidecar_path(path)
    if not p.exists():
        return out
    for line in p.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def load_image(path, dtype=None, element_count=None, meta: Optional[ImageMeta] = None,
               mmap: bool = True) -> MemoryImage:
    """Load a raw payload, filling anything not passed explicitly from the sidecar.

    With ``mmap`` the payload is memory-mapped read-only, so large images are
    paged in on demand rather than copied.
    """
    path = Path(path)
    side = read_sidecar(path)
    dtype = dtype if dtype is not None else side.get("dtype")
    if dtype is None:
        raise UnknownDtype(f"{path}: no dtype given and no sidecar to read it from")
    lay = layout_of(parse_dtype(dtype))
    if element_count is None and "element_count" in side:
        element_count = int(side["element_count"])

    size = os.path.getsize(path)
    if element_count is None:
        if size % lay.nbytes:
            raise SizeMismatch(f"{path}: {size} bytes is not a whole number of {lay.dtype} words")
        element_count = size // lay.nbytes
    if size != element_count * lay.nbytes:
        raise SizeMismatch(
            f"{path}: {size} bytes, expected {element_count} x {lay.nbytes} = "
            f"{element_count * lay.nbytes}"
        )

    if meta is None:
        hw = side.get("hardware_unit") or None
        meta = ImageMeta(
            benchmark_id=side.get("benchmark_id", ""),
            hardware_unit=hw,
            warp_size=int(side.get("warp_size", DEFAULT_WARP_SIZE)),
            source=side.get("source", str(path)),
        )

    if element_count == 0:
        data = np.empty(0, dtype=lay.word_dtype)
    elif mmap:
        data = np.memmap(path, dtype=lay.word_dtype, mode="r", shape=(element_count,))
    else:
        data = np.fromfile(path, dtype=lay.word_dtype, count=element_count)
    return MemoryImage(lay.dtype, data, meta)


def store_image(image: MemoryImage, path) -> None:
    path = Path(path)
    image.data.astype(layout_of(image.dtype).word_dtype, copy=False).tofile(path)
    m = image.meta
    lines = [
        f"dtype={image.dtype}",
        f"element_count={image.element_count}",
        f"warp_size={m.warp_size}",
        f"benchmark_id={m.benchmark_id}",
        f"hardware_unit={m.hardware_unit or ''}",
        f"source={m.source}",
    ]
    sidecar_path(path).write_text("\n".join(lines) + "\n")


# -- diffing ------------------------------------------------------------------

@dataclass(frozen=True)
class DiffRecord:
    element_index: int
    golden_bits: int
    corrupted_bits: int
    xor_mask: int
    category: Category
    flip_count: int
    lane: int


class DiffSet:
    """Column-oriented collection of diff records, ascending by element index.

    Iterating yields :class:`DiffRecord` objects; the numpy columns are what
    the profile accumulator consumes.
    """

    __slots__ = ("dtype", "warp_size", "index", "golden", "corrupted", "xor",
                 "category", "flip_count", "lane")

    def __init__(self, dtype, warp_size, index, golden, corrupted, category=None):
        lay = layout_of(dtype)
        self.dtype = lay.dtype
        self.warp_size = int(warp_size)
        self.index = np.asarray(index, dtype=np.int64)
        self.golden = np.asarray(golden, dtype=lay.word_dtype)
        self.corrupted = np.asarray(corrupted, dtype=lay.word_dtype)
        self.xor = self.golden ^ self.corrupted
        if category is None:
            category = classify_words(self.corrupted, lay.dtype)
        self.category = np.asarray(category, dtype=np.uint8)
        self.flip_count = popcount(self.xor)
        self.lane = (self.index % self.warp_size).astype(np.int32)

    @classmethod
    def empty(cls, dtype, warp_size=DEFAULT_WARP_SIZE):
        return cls(dtype, warp_size, [], [], [])

    @classmethod
    def concat(cls, parts, dtype, warp_size):
        parts = list(parts)
        if not parts:
            return cls.empty(dtype, warp_size)
        return cls(
            dtype, warp_size,
            np.concatenate([p.index for p in parts]),
            np.concatenate([p.golden for p in parts]),
            np.concatenate([p.corrupted for p in parts]),
            np.concatenate([p.category for p in parts]),
        )

    def __len__(self):
        return int(self.index.shape[0])

    def record(self, i) -> DiffRecord:
        return DiffRecord(
            element_index=int(self.index[i]),
            golden_bits=int(self.golden[i]),
            corrupted_bits=int(self.corrupted[i]),
            xor_mask=int(self.xor[i]),
            category=CATEGORIES[int(self.category[i])],
            flip_count=int(self.flip_count[i]),
            lane=int(self.lane[i]),
        )

    def __getitem__(self, i):
        return self.record(range(len(self))[i])

    def __iter__(self) -> Iterator[DiffRecord]:
        for i in range(len(self)):
            yield self.record(i)

    def category_counts(self) -> np.ndarray:
        return np.bincount(self.category, minlength=len(CATEGORIES)).astype(np.int64)

    def __repr__(self):
        return f"DiffSet({self.dtype}, records={len(self)}, W={self.warp_size})"


def _check_pair(golden: MemoryImage, corrupted: MemoryImage):
    if golden.dtype != corrupted.dtype:
        raise ShapeMismatch(f"dtype {golden.dtype} vs {corrupted.dtype}")
    if golden.element_count != corrupted.element_count:
        raise ShapeMismatch(f"element_count {golden.element_count} vs {corrupted.element_count}")
    if golden.warp_size != corrupted.warp_size:
        raise ShapeMismatch(f"warp size {golden.warp_size} vs {corrupted.warp_size}")


def iter_diff(golden: MemoryImage, corrupted: MemoryImage, window: int = DEFAULT_WINDOW,
              threads=None) -> Iterator[DiffSet]:
    """Yield one :class:`DiffSet` per fixed-size window, in index order."""
    _check_pair(golden, corrupted)
    n = golden.element_count
    dtype, w = golden.dtype, golden.warp_size

    def one(start):
        g = np.asarray(golden.data[start:start + window])
        c = np.asarray(corrupted.data[start:start + window])
        hit = np.flatnonzero(g != c)
        return DiffSet(dtype, w, hit + start, g[hit], c[hit])

    yield from _threads.ordered_map(one, range(0, n, window), threads)


def diff_images(golden: MemoryImage, corrupted: MemoryImage, window: int = DEFAULT_WINDOW,
                threads=None) -> DiffSet:
    return DiffSet.concat(iter_diff(golden, corrupted, window, threads),
                          golden.dtype, golden.warp_size)


def corruption_rate(diffs: DiffSet, element_count: int) -> float:
    return len(diffs) / element_count if element_count else 0.0


# -- run outcomes -------------------------------------------------------------

class Outcome(str, Enum):
    HANG = "Hang"
    DUE = "DUE"
    BENIGN = "Benign"
    SDC = "SDC"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class RunMeta:
    runtime: float
    fault_free_runtime: float
    due_flag: bool = False

    def __post_init__(self):
        if not (self.runtime > 0 and self.fault_free_runtime > 0):
            raise ValueError("runtimes must be positive")


def classify_outcome(run: Optional[RunMeta], diff_count: int) -> Outcome:
    """Hang > DUE > Benign/SDC.  With ``run=None`` only the diff decides."""
    if diff_count < 0:
        raise ValueError("diff_count must be >= 0")
    if run is not None:
        if run.runtime > 2 * run.fault_free_runtime:
            return Outcome.HANG
        if run.due_flag:
            return Outcome.DUE
    return Outcome.BENIGN if diff_count == 0 else Outcome.SDC
