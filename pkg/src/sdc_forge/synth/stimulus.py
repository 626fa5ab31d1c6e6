"""Deterministic operand streams: Mersenne Twister, Fibonacci LFSR, universal test patterns.

A stream is fully determined by ``(kind, stream_id, seed)``.  Raw words are
reinterpreted in the target format; any NaN/INF pattern gets its exponent MSB
cleared so operands are always finite.
"""
from __future__ import annotations

from enum import Enum

import numpy as np

from ..errors import ZeroLfsrSeed
from ..formats import DType, layout_of, parse_dtype, special_codes

GOLDEN_RATIO_32 = 0x9E3779B9

# x^32 + x^22 + x^2 + x + 1
LFSR32_TAPS = (32, 22, 2, 1)
# x^16 + x^14 + x^13 + x^11 + 1, used for the brute-force period check
LFSR16_TAPS = (16, 14, 13, 11)


class StimulusKind(str, Enum):
    MT = "MT"
    LFSR = "LFSR"
    UTP = "UTP"

    def __str__(self):
        return self.value


def lfsr_step(state: int, taps=LFSR32_TAPS, width: int = 32) -> int:
    """One Fibonacci shift: XOR of tap bits (1-based degrees) enters at bit 0."""
    feedback = 0
    for tap in taps:
        feedback ^= (state >> (tap - 1)) & 1
    return ((state << 1) & ((1 << width) - 1)) | feedback


def lfsr_period(seed: int, taps=LFSR16_TAPS, width: int = 16) -> int:
    if seed == 0:
        raise ZeroLfsrSeed("an all-zero LFSR state never leaves zero")
    state, steps = seed, 0
    while True:
        state = lfsr_step(state, taps, width)
        steps += 1
        if state == seed:
            return steps


def mt19937_words(seed: int, count: int) -> np.ndarray:
    """Raw 32-bit MT19937 outputs seeded with the reference ``init_genrand``."""
    rs = np.random.RandomState(seed & 0xFFFFFFFF)
    return rs.randint(0, 1 << 32, size=count, dtype=np.uint32)


def utp_patterns(width: int) -> list[int]:
    """All-zeros, all-ones, walking-one, walking-zero: ``2 + 2*width`` words."""
    ones = (1 << width) - 1
    walking_one = [1 << i for i in range(width)]
    return [0, ones] + walking_one + [ones ^ w for w in walking_one]


def _stream_bits(dtype: DType) -> int:
    """Significant bits drawn per element (TF32 padding excluded)."""
    lay = layout_of(dtype)
    return lay.width_bits - bin(lay.padding_mask).count("1")


class StimulusStream:
    """Endless operand stream; :meth:`take` continues where the last call stopped."""

    def __init__(self, kind, stream_id: int, seed: int, dtype):
        self.kind = StimulusKind(kind)
        self.stream_id = int(stream_id)
        self.seed = int(seed)
        self.dtype = parse_dtype(dtype)
        self.bits = _stream_bits(self.dtype)
        if self.kind is StimulusKind.MT:
            self._rs = np.random.RandomState((self.seed + self.stream_id * GOLDEN_RATIO_32) & 0xFFFFFFFF)
        elif self.kind is StimulusKind.LFSR:
            if self.seed & 0xFFFFFFFF == 0:
                raise ZeroLfsrSeed("LFSR seed must be nonzero")
            state = (self.seed ^ (self.stream_id * GOLDEN_RATIO_32)) & 0xFFFFFFFF
            self._state = state or GOLDEN_RATIO_32
        else:
            self._patterns = utp_patterns(self.bits)
            self._pos = (self.seed + self.stream_id) % len(self._patterns)

    def raw(self, count: int) -> np.ndarray:
        """Next ``count`` words of ``self.bits`` significant bits (uint64)."""
        if self.kind is StimulusKind.MT:
            words = self._rs.randint(0, 1 << 32, size=count, dtype=np.uint32).astype(np.uint64)
            return words >> np.uint64(32 - self.bits) if self.bits < 32 else words
        if self.kind is StimulusKind.LFSR:
            out = np.empty(count, dtype=np.uint64)
            state = self._state
            for i in range(count):
                state = lfsr_step(state)
                out[i] = state
            self._state = state
            return out >> np.uint64(32 - self.bits) if self.bits < 32 else out
        n = len(self._patterns)
        idx = (self._pos + np.arange(count)) % n
        self._pos = (self._pos + count) % n
        return np.asarray(self._patterns, dtype=np.uint64)[idx]

    def take_words(self, count: int) -> np.ndarray:
        lay = layout_of(self.dtype)
        raw = self.raw(count)
        if lay.padding_mask:
            raw = raw << np.uint64(lay.width_bits - self.bits)
        words = raw.astype(lay.word_dtype)
        return finite_words(words, self.dtype)

    def take(self, count: int) -> np.ndarray:
        return words_to_values(self.take_words(count), self.dtype)


def finite_words(words: np.ndarray, dtype) -> np.ndarray:
    """Clear the exponent MSB of every NaN/INF word."""
    lay = layout_of(dtype)
    if not lay.is_float:
        return words
    bad = special_codes(words, dtype) >= 0
    if bad.any():
        words = words.copy()
        words[bad] &= words.dtype.type(lay.word_mask & ~(1 << lay.exponent_bits[1]))
    return words


def words_to_values(words: np.ndarray, dtype) -> np.ndarray:
    """Numeric view used by the kernels.

    FP32/TF32 -> float32, BF16 -> float32 holding the BF16 value, FP16 -> float16,
    integers -> their unsigned type.  FP8 has no arithmetic here and stays as words.
    """
    dtype = parse_dtype(dtype)
    if dtype in (DType.FP32, DType.TF32):
        return words.astype(np.uint32).view(np.float32)
    if dtype is DType.BF16:
        return (words.astype(np.uint32) << np.uint32(16)).view(np.float32)
    if dtype is DType.FP16:
        return words.astype(np.uint16).view(np.float16)
    if dtype is DType.UINT8:
        return words.astype(np.uint8)
    if dtype is DType.UINT32:
        return words.astype(np.uint32)
    return words


def gen_stimulus(kind, stream_id: int, seed: int, count: int, dtype) -> np.ndarray:
    if count < 0:
        raise ValueError("count must be >= 0")
    return StimulusStream(kind, stream_id, seed, dtype).take(count)
