"""Bit layouts of the supported numeric formats and corruption classification.

Every word handled here is an unsigned integer holding the raw bits of one
element.  Scalar helpers operate on Python ints; the ``*_words`` variants do
the same job over numpy arrays and must agree with the scalar versions bit for
bit.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import (
    InadmissibleCategory,
    NotACorruption,
    UnknownDtype,
    UnobservableInjection,
)


class DType(str, Enum):
    UINT8 = "UINT8"
    UINT32 = "UINT32"
    FP8_E4M3 = "FP8_E4M3"
    FP8_E5M2 = "FP8_E5M2"
    FP16 = "FP16"
    BF16 = "BF16"
    FP32 = "FP32"
    TF32 = "TF32"

    def __str__(self):
        return self.value


class Category(str, Enum):
    NULLIFIED = "Nullified"
    NAN = "NaN"
    PLUS_INF = "PlusInf"
    MINUS_INF = "MinusInf"
    NON_SPECIAL = "NonSpecial"

    def __str__(self):
        return self.value

    @property
    def code(self) -> int:
        return CATEGORY_CODES[self]


# Fixed order used for every array indexed by category.
CATEGORIES = (
    Category.NULLIFIED,
    Category.NAN,
    Category.PLUS_INF,
    Category.MINUS_INF,
    Category.NON_SPECIAL,
)
CATEGORY_CODES = {c: i for i, c in enumerate(CATEGORIES)}
SPECIAL_CATEGORIES = (Category.NAN, Category.PLUS_INF, Category.MINUS_INF)


@dataclass(frozen=True)
class FormatLayout:
    """Bit-field description of one format.  Bit ranges are inclusive ``(lo, hi)``."""

    dtype: DType
    width_bits: int
    sign_bit: Optional[int]
    exponent_bits: Optional[tuple[int, int]]
    mantissa_bits: Optional[tuple[int, int]]
    storage_dtype: DType

    @property
    def is_float(self) -> bool:
        return self.exponent_bits is not None

    @property
    def word_mask(self) -> int:
        return (1 << self.width_bits) - 1

    @property
    def sign_mask(self) -> int:
        return 0 if self.sign_bit is None else 1 << self.sign_bit

    @property
    def exponent_mask(self) -> int:
        return _field_mask(self.exponent_bits)

    @property
    def mantissa_mask(self) -> int:
        return _field_mask(self.mantissa_bits)

    @property
    def padding_mask(self) -> int:
        if not self.is_float:
            return 0
        return self.word_mask & ~(self.sign_mask | self.exponent_mask | self.mantissa_mask)

    @property
    def nbytes(self) -> int:
        return self.width_bits // 8

    @property
    def word_dtype(self) -> np.dtype:
        """Little-endian unsigned numpy dtype holding one raw word."""
        return np.dtype(f"<u{self.nbytes}")


def _field_mask(bits):
    if bits is None:
        return 0
    lo, hi = bits
    return ((1 << (hi - lo + 1)) - 1) << lo


_LAYOUTS = {
    DType.UINT8: FormatLayout(DType.UINT8, 8, None, None, None, DType.UINT32),
    DType.UINT32: FormatLayout(DType.UINT32, 32, None, None, None, DType.UINT32),
    DType.FP8_E4M3: FormatLayout(DType.FP8_E4M3, 8, 7, (3, 6), (0, 2), DType.FP8_E4M3),
    DType.FP8_E5M2: FormatLayout(DType.FP8_E5M2, 8, 7, (2, 6), (0, 1), DType.FP8_E5M2),
    DType.FP16: FormatLayout(DType.FP16, 16, 15, (10, 14), (0, 9), DType.FP16),
    DType.BF16: FormatLayout(DType.BF16, 16, 15, (7, 14), (0, 6), DType.FP32),
    DType.FP32: FormatLayout(DType.FP32, 32, 31, (23, 30), (0, 22), DType.FP32),
    # TF32 lives in the top 19 bits of an FP32 word; bits 0..12 are padding.
    DType.TF32: FormatLayout(DType.TF32, 32, 31, (23, 30), (13, 22), DType.FP32),
}


def parse_dtype(value) -> DType:
    if isinstance(value, DType):
        return value
    try:
        return DType(str(value).upper())
    except ValueError:
        raise UnknownDtype(f"unknown dtype {value!r}") from None


def layout_of(dtype) -> FormatLayout:
    return _LAYOUTS[parse_dtype(dtype)]


def admissible_categories(dtype) -> tuple[Category, ...]:
    lay = layout_of(dtype)
    if not lay.is_float:
        return (Category.NULLIFIED, Category.NON_SPECIAL)
    if lay.dtype is DType.FP8_E4M3:
        return (Category.NULLIFIED, Category.NAN, Category.NON_SPECIAL)
    return CATEGORIES


def special_of(bits: int, dtype) -> Optional[Category]:
    """Return NaN / PlusInf / MinusInf for special encodings, otherwise None."""
    lay = layout_of(dtype)
    if not lay.is_float:
        return None
    exp_all_ones = (bits & lay.exponent_mask) == lay.exponent_mask
    mantissa = bits & lay.mantissa_mask
    if lay.dtype is DType.FP8_E4M3:
        # single NaN encoding S.1111.111, no infinities
        if exp_all_ones and mantissa == lay.mantissa_mask:
            return Category.NAN
        return None
    if not exp_all_ones:
        return None
    if mantissa:
        return Category.NAN
    return Category.MINUS_INF if bits & lay.sign_mask else Category.PLUS_INF


def classify_value(golden_bits: int, corrupted_bits: int, dtype) -> Category:
    if golden_bits == corrupted_bits:
        raise NotACorruption(f"0x{golden_bits:x} is not corrupted")
    if corrupted_bits == 0:
        return Category.NULLIFIED
    return special_of(corrupted_bits, dtype) or Category.NON_SPECIAL


def flip_stats(golden_bits: int, corrupted_bits: int, width: int) -> tuple[int, set[int]]:
    mask = (golden_bits ^ corrupted_bits) & ((1 << width) - 1)
    positions = {b for b in range(width) if mask >> b & 1}
    return len(positions), positions


def make_corrupted(category, golden_bits: int, dtype, rng_draw: int = 0) -> int:
    """Build the word that a fixed-pattern corruption of ``golden_bits`` produces.

    ``rng_draw`` only feeds the NaN payload below the quiet bit.
    NonSpecial corruptions have no fixed pattern; use
    :func:`sdc_forge.inject.sample_nonspecial_mask` for those.
    """
    category = Category(category)
    lay = layout_of(dtype)
    if category is Category.NON_SPECIAL:
        raise ValueError("NonSpecial corruptions are built from a sampled flip mask")
    if category not in admissible_categories(lay.dtype):
        raise InadmissibleCategory(f"{category} cannot be encoded in {lay.dtype}")

    if category is Category.NULLIFIED:
        word = 0
    elif category is Category.NAN:
        sign = golden_bits & lay.sign_mask
        if lay.dtype is DType.FP8_E4M3:
            mantissa = lay.mantissa_mask
        else:
            lo, hi = lay.mantissa_bits
            quiet = 1 << hi
            payload = (int(rng_draw) << lo) & lay.mantissa_mask & ~quiet
            mantissa = quiet | payload
        word = sign | lay.exponent_mask | mantissa
        if special_of(golden_bits, lay.dtype) is Category.NAN:
            raise UnobservableInjection("golden value is already NaN")
    elif category is Category.PLUS_INF:
        word = lay.exponent_mask
    else:
        word = lay.sign_mask | lay.exponent_mask

    if word == golden_bits:
        raise UnobservableInjection(f"{category} leaves 0x{golden_bits:x} unchanged")
    return word


def special_codes(words: np.ndarray, dtype) -> np.ndarray:
    """Vectorised :func:`special_of`: category code per word, -1 for non-special."""
    lay = layout_of(dtype)
    words = np.asarray(words)
    out = np.full(words.shape, -1, dtype=np.int8)
    if not lay.is_float:
        return out
    wt = words.dtype.type
    exp_all_ones = (words & wt(lay.exponent_mask)) == wt(lay.exponent_mask)
    mantissa = words & wt(lay.mantissa_mask)
    if lay.dtype is DType.FP8_E4M3:
        out[exp_all_ones & (mantissa == wt(lay.mantissa_mask))] = CATEGORY_CODES[Category.NAN]
        return out
    negative = (words & wt(lay.sign_mask)) != 0
    out[exp_all_ones & (mantissa != 0)] = CATEGORY_CODES[Category.NAN]
    inf = exp_all_ones & (mantissa == 0)
    out[inf & ~negative] = CATEGORY_CODES[Category.PLUS_INF]
    out[inf & negative] = CATEGORY_CODES[Category.MINUS_INF]
    return out


def classify_words(corrupted: np.ndarray, dtype) -> np.ndarray:
    """Vectorised :func:`classify_value` over words already known to differ from golden."""
    codes = special_codes(corrupted, dtype)
    codes[codes < 0] = CATEGORY_CODES[Category.NON_SPECIAL]
    codes[np.asarray(corrupted) == 0] = CATEGORY_CODES[Category.NULLIFIED]
    return codes.astype(np.uint8)


def popcount(words: np.ndarray) -> np.ndarray:
    """Per-element set-bit count for unsigned arrays up to 64 bits wide."""
    words = np.asarray(words).astype(np.uint64)
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(words).astype(np.uint8)
    counts = np.zeros(words.shape, dtype=np.uint8)
    for b in range(64):
        counts += ((words >> np.uint64(b)) & np.uint64(1)).astype(np.uint8)
    return counts


def is_observable_golden(words: np.ndarray, dtype) -> np.ndarray:
    """True where a word is nonzero and not a special value."""
    words = np.asarray(words)
    return (words != 0) & (special_codes(words, dtype) < 0)
