"""Reference micro-benchmark kernels producing golden images.

Floating-point results are correctly rounded (round-to-nearest-even).  Sums
and products are formed in float64, where they are either exact or rounded
finely enough that the second rounding to FP32/FP16 cannot differ from a
direct one.  FMA additionally corrects the one case where it could: an
intermediate landing exactly on a target-format midpoint.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from ..errors import DimensionMismatch
from ..formats import DType, is_observable_golden, layout_of, parse_dtype
from ..image import DEFAULT_WARP_SIZE, ImageMeta, MemoryImage
from .stimulus import StimulusKind, StimulusStream

MAX_NUDGES = 10_000


class Op(str, Enum):
    ADD = "ADD"
    MULT = "MULT"
    FMA = "FMA"
    GEMM = "GEMM"
    GEMM_A = "GEMM_A"
    GEMM_M = "GEMM_M"

    def __str__(self):
        return self.value

    @property
    def is_gemm(self):
        return self in (Op.GEMM, Op.GEMM_A, Op.GEMM_M)


class FunctionalUnit(str, Enum):
    ALU = "ALU"
    TENSOR = "Tensor"
    MEM = "MEM"

    def __str__(self):
        return self.value


_NUMPY_FLOAT = {DType.FP32: np.float32, DType.TF32: np.float32, DType.BF16: np.float32,
                DType.FP16: np.float16}
_UINT_MASK = {DType.UINT32: 0xFFFFFFFF, DType.UINT8: 0xFF}


@dataclass(frozen=True)
class BenchmarkSpec:
    functional_unit: FunctionalUnit
    generator: StimulusKind
    operation: Op
    dtype: DType
    n: Optional[int] = None
    m: Optional[int] = None
    k: Optional[int] = None
    alpha: float = 1
    beta: float = 1
    seed: int = 1
    warp_size: int = DEFAULT_WARP_SIZE

    def __post_init__(self):
        object.__setattr__(self, "functional_unit", FunctionalUnit(self.functional_unit))
        object.__setattr__(self, "generator", StimulusKind(self.generator))
        object.__setattr__(self, "operation", Op(self.operation))
        object.__setattr__(self, "dtype", parse_dtype(self.dtype))
        if self.operation.is_gemm:
            if not all(d is not None and d >= 1 for d in (self.m, self.n, self.k)):
                raise DimensionMismatch("GEMM needs m, n, k >= 1")
            if self.operation is Op.GEMM_A and self.k != self.n:
                raise DimensionMismatch(f"GEMM_A uses B = I, so k ({self.k}) must equal n ({self.n})")
        elif self.n is None or self.n < 1:
            raise DimensionMismatch("elementwise ops need n >= 1")

    @property
    def benchmark_id(self) -> str:
        dims = f"{self.m}x{self.n}x{self.k}" if self.operation.is_gemm else f"{self.n}"
        return f"{self.functional_unit}-{self.generator}-{self.operation}-{self.dtype}-{dims}-s{self.seed}"

    @property
    def storage_dtype(self) -> DType:
        return layout_of(self.dtype).storage_dtype

    @property
    def accumulate_dtype(self) -> DType:
        if self.functional_unit is FunctionalUnit.TENSOR and self.dtype is DType.FP16:
            return DType.FP32
        return self.storage_dtype


# -- correctly rounded primitives ----------------------------------------------

def round_to_format(x, dtype) -> np.ndarray:
    """Round float values to ``dtype`` (RNE), returned in its numeric view."""
    dtype = parse_dtype(dtype)
    if dtype in (DType.BF16, DType.TF32):
        drop = 16 if dtype is DType.BF16 else 13
        u = np.asarray(x, dtype=np.float32).view(np.uint32).astype(np.uint64)
        bias = ((u >> np.uint64(drop)) & np.uint64(1)) + np.uint64((1 << (drop - 1)) - 1)
        u = ((u + bias) >> np.uint64(drop)) << np.uint64(drop)
        return u.astype(np.uint32).view(np.float32)
    with np.errstate(over="ignore", invalid="ignore"):
        return np.asarray(x).astype(_NUMPY_FLOAT[dtype])


def _as_float64(x):
    return np.asarray(x).astype(np.float64)


def _fma_float(a, b, c, dtype) -> np.ndarray:
    target = _NUMPY_FLOAT[dtype]
    x = _as_float64(a) * _as_float64(b)  # exact for <= 24-bit significands
    c = _as_float64(c)
    x, c = np.broadcast_arrays(x, c)
    with np.errstate(over="ignore", invalid="ignore"):
        s = x + c
        bv = s - x
        err = (x - (s - bv)) + (c - bv)  # s + err == x + c exactly
        r = s.astype(target)
        r64 = r.astype(np.float64)
        toward = np.where(s > r64, np.inf, -np.inf).astype(target)
        other = np.nextafter(r, toward)
        tie = (r64 != s) & ((r64 + other.astype(np.float64)) * 0.5 == s) & (err != 0) & np.isfinite(err)
    if tie.any():
        hi, lo = np.maximum(r, other), np.minimum(r, other)
        r = np.where(tie, np.where(err > 0, hi, lo), r)
    return round_to_format(r, dtype) if dtype in (DType.BF16, DType.TF32) else r


def _uint(op, a, b, c, dtype):
    mask = np.uint64(_UINT_MASK[dtype])
    a, b = np.asarray(a).astype(np.uint64), np.asarray(b).astype(np.uint64)
    if op is Op.ADD:
        out = a + b
    elif op is Op.MULT:
        out = a * b
    else:
        out = a * b + np.asarray(c).astype(np.uint64)
    return (out & mask).astype(np.uint32 if dtype is DType.UINT32 else np.uint8)


def elementwise(op, a, b, c=None, dtype=DType.FP32) -> np.ndarray:
    """ADD / MULT / FMA computed per element in ``dtype``."""
    op, dtype = Op(op), parse_dtype(dtype)
    if op.is_gemm:
        raise ValueError(f"{op} is not elementwise")
    if op is Op.FMA and c is None:
        raise DimensionMismatch("FMA needs a third operand")
    shapes = {np.shape(a), np.shape(b)} | ({np.shape(c)} if op is Op.FMA else set())
    if len(shapes) != 1:
        raise DimensionMismatch(f"operand shapes differ: {sorted(shapes)}")
    if dtype in _UINT_MASK:
        return _uint(op, a, b, c, dtype)
    if dtype not in _NUMPY_FLOAT:
        raise ValueError(f"no arithmetic defined for {dtype}")
    if op is Op.FMA:
        return _fma_float(a, b, c, dtype)
    a64, b64 = _as_float64(a), _as_float64(b)
    with np.errstate(over="ignore"):
        return round_to_format(a64 + b64 if op is Op.ADD else a64 * b64, dtype)


def gemm(a, b, c, alpha=1, beta=1, dtype=DType.FP32, accumulate=None) -> np.ndarray:
    """``alpha * A @ B + beta * C`` with FMA accumulation in ``accumulate``.

    The result comes back in ``dtype``'s storage format.
    """
    dtype = parse_dtype(dtype)
    storage = layout_of(dtype).storage_dtype
    acc_dtype = parse_dtype(accumulate) if accumulate is not None else storage
    a, b, c = np.asarray(a), np.asarray(b), np.asarray(c)
    if a.ndim != 2 or b.ndim != 2 or c.ndim != 2:
        raise DimensionMismatch("GEMM operands must be 2-D")
    m, kk = a.shape
    if b.shape[0] != kk or c.shape != (m, b.shape[1]):
        raise DimensionMismatch(f"A{a.shape} B{b.shape} C{c.shape} do not chain")

    if acc_dtype in _UINT_MASK:
        mask = np.uint64(_UINT_MASK[acc_dtype])
        acc = a.astype(np.uint64) @ b.astype(np.uint64)
        out = (np.uint64(int(alpha)) * acc + np.uint64(int(beta)) * c.astype(np.uint64)) & mask
        return out.astype(np.uint32 if acc_dtype is DType.UINT32 else np.uint8)

    if dtype in (DType.BF16, DType.TF32):
        a, b = round_to_format(a, dtype), round_to_format(b, dtype)
    acc = np.zeros((m, b.shape[1]), dtype=_NUMPY_FLOAT[acc_dtype])
    for i in range(kk):
        acc = _fma_float(a[:, i:i + 1], b[i:i + 1, :], acc, acc_dtype)
    scaled = elementwise(Op.MULT, round_to_format(np.full(acc.shape, alpha), acc_dtype), acc, dtype=acc_dtype)
    beta_arr = round_to_format(np.full(acc.shape, beta), acc_dtype)
    out = _fma_float(beta_arr, c, scaled, acc_dtype)
    return round_to_format(out, storage)


# -- benchmark driver ----------------------------------------------------------

def _values_to_words(values, dtype):
    lay = layout_of(dtype)
    return np.ascontiguousarray(values).reshape(-1).view(lay.word_dtype)


def _bad(values, dtype):
    return ~is_observable_golden(_values_to_words(values, dtype), dtype)


def run_kernel(spec: BenchmarkSpec) -> MemoryImage:
    """Golden output image of one benchmark.

    Elements whose output would be zero or special get their operands redrawn
    from the continuing streams, so every golden word can be corrupted
    observably.
    """
    if spec.functional_unit is FunctionalUnit.MEM:
        raise ValueError("MEM benchmarks are not modelled")
    if spec.dtype in (DType.FP8_E4M3, DType.FP8_E5M2):
        raise ValueError("FP8 is an injection/classification format only; no FP8 kernels")
    streams = [StimulusStream(spec.generator, sid, spec.seed, spec.dtype) for sid in range(3)]
    storage = spec.storage_dtype
    if spec.operation.is_gemm:
        out = _run_gemm(spec, streams)
    else:
        out = _run_elementwise(spec, streams)
    meta = ImageMeta(benchmark_id=spec.benchmark_id, warp_size=spec.warp_size, source="synth")
    return MemoryImage(storage, _values_to_words(out, storage), meta)


def _widen(values, spec):
    # UINT8 results are stored in 32-bit words
    if spec.dtype is DType.UINT8:
        return values.astype(np.uint32)
    return values


def _run_elementwise(spec, streams):
    n, op, dt = spec.n, spec.operation, spec.dtype
    a, b = streams[0].take(n), streams[1].take(n)
    c = streams[2].take(n) if op is Op.FMA else None
    out = _widen(elementwise(op, a, b, c, dt), spec)
    for idx in np.flatnonzero(_bad(out, spec.storage_dtype)):
        for _ in range(MAX_NUDGES):
            ta, tb = streams[0].take(1), streams[1].take(1)
            tc = streams[2].take(1) if op is Op.FMA else None
            val = _widen(elementwise(op, ta, tb, tc, dt), spec)
            if not _bad(val, spec.storage_dtype)[0]:
                out[idx] = val[0]
                break
        else:
            raise RuntimeError(f"could not find an observable golden for element {idx}")
    return out


def _run_gemm(spec, streams):
    m, n, k, op = spec.m, spec.n, spec.k, spec.operation
    dt, storage = spec.dtype, spec.storage_dtype
    a = streams[0].take(m * k).reshape(m, k).copy()
    if op is Op.GEMM_A:
        b = np.eye(k, n, dtype=a.dtype)
    else:
        b = streams[1].take(k * n).reshape(k, n)
    beta = 0 if op is Op.GEMM_M else spec.beta
    if beta == 0:
        c = np.zeros((m, n), dtype=a.dtype)
    else:
        c = streams[2].take(m * n).reshape(m, n)

    def compute(rows):
        return gemm(a[rows], b, c[rows], spec.alpha, beta, dt, spec.accumulate_dtype)

    out = compute(slice(None))
    for _ in range(MAX_NUDGES):
        bad_rows = np.flatnonzero(_bad(out, storage).reshape(m, n).any(axis=1))
        if bad_rows.size == 0:
            return out
        for r in bad_rows:
            a[r] = streams[0].take(k)
        out[bad_rows] = compute(bad_rows)
    raise RuntimeError("could not make every GEMM output observable")


def make_golden(count: int, dtype=DType.FP32, generator=StimulusKind.MT, seed: int = 1,
                warp_size: int = DEFAULT_WARP_SIZE) -> MemoryImage:
    """Observable golden image straight from a stimulus stream (no arithmetic)."""
    dtype = parse_dtype(dtype)
    stream = StimulusStream(generator, 0, seed, dtype)
    words = stream.take_words(count)
    for _ in range(MAX_NUDGES):
        bad = np.flatnonzero(~is_observable_golden(words, dtype))
        if bad.size == 0:
            break
        words[bad] = stream.take_words(bad.size)
    else:
        raise RuntimeError("could not draw an observable golden image")
    meta = ImageMeta(benchmark_id=f"stimulus-{generator}-{dtype}-{count}-s{seed}",
                     warp_size=warp_size, source="synth")
    return MemoryImage(dtype, words, meta)
