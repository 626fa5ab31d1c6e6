"""Distribution-aware software fault injection driven by an :class:`ErrorProfile`.

The output buffer is walked in warp-sized chunks.  Every element gets one
uniform draw that selects at most one corruption category, with per-lane
rates scaled by the profile's lane weights.  NonSpecial corruptions get a
multi-bit flip mask drawn count-first from the profile's bit model.

Each chunk draws from its own generator seeded with ``(seed, chunk_index)``,
so results do not depend on how chunks are scheduled across threads.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from . import _threads
from .errors import ContextMismatch, NoAdmissibleMask, RateOverflow, UnobservableInjection
from .formats import CATEGORIES, CATEGORY_CODES, Category, layout_of, make_corrupted, special_of
from .image import MemoryImage
from .profile import ErrorProfile

MAX_REDRAWS = 16
CHUNKS_PER_TASK = 1024
RATE_TOL = 1e-12
LOG_SCHEMA_VERSION = 1
_NS = CATEGORY_CODES[Category.NON_SPECIAL]
_NAN = CATEGORY_CODES[Category.NAN]


def plan_chunks(element_count: int, warp_size: int) -> list[range]:
    if element_count < 0 or warp_size < 1:
        raise ValueError("element_count must be >= 0 and warp_size >= 1")
    return [range(s, min(s + warp_size, element_count)) for s in range(0, element_count, warp_size)]


def chunk_rng(seed: int, chunk_index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(chunk_index)])


def lane_rates(profile: ErrorProfile) -> np.ndarray:
    """Per-element corruption rate ``[lane, category]``.

    rate_c(lane) = r * P(c) * W * w_c(lane); raises :class:`RateOverflow` when a
    lane's summed rate cannot be a Bernoulli probability.
    """
    W = profile.warp_size
    rates = profile.corruption_rate * W * (profile.category_vector()[:, None] * profile.lane_matrix())
    rates = rates.T
    totals = rates.sum(axis=1)
    worst = int(np.argmax(totals)) if W else 0
    if totals[worst] > 1.0 + RATE_TOL:
        raise RateOverflow(worst, float(totals[worst]))
    return rates


def _thresholds(rates: np.ndarray) -> np.ndarray:
    return np.cumsum(rates, axis=1)


def _pick(thresholds_for_lanes: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Category code per draw, or -1 when ``u`` falls past every threshold."""
    codes = (u[:, None] >= thresholds_for_lanes).sum(axis=1)
    return np.where(codes < len(CATEGORIES), codes, -1)


def sample_event(profile: ErrorProfile, lane: int, rng: np.random.Generator,
                 rates: Optional[np.ndarray] = None) -> Optional[Category]:
    """Draw the corruption category for one element in ``lane`` (None = untouched)."""
    if rates is None:
        rates = lane_rates(profile)
    if not 0 <= lane < profile.warp_size:
        raise ValueError(f"lane {lane} outside [0, {profile.warp_size})")
    code = int(_pick(_thresholds(rates)[lane][None, :], np.array([rng.random()]))[0])
    return None if code < 0 else CATEGORIES[code]


class MaskDraw(NamedTuple):
    mask: int
    retries_used: int


class BitModel(NamedTuple):
    """Per-profile sampling tables, built once per injection run."""

    count_cdf: np.ndarray
    weights: np.ndarray
    by_weight: tuple

    @classmethod
    def of(cls, profile: ErrorProfile, width: int) -> "BitModel":
        q = profile.count_dist
        if q is None:
            raise NoAdmissibleMask("profile has no flip-count distribution")
        p = profile.position_rate
        if p is None or not np.any(p > 0):
            weights = np.ones(width)
        else:
            weights = np.asarray(p, dtype=np.float64)
        by_weight = tuple(sorted(range(width), key=lambda b: (weights[b], b)))
        cdf = np.cumsum(q) / q.sum()
        cdf[np.flatnonzero(q)[-1]:] = 1.0
        return cls(cdf, weights, by_weight)


def weighted_positions(weights: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k distinct indices by successive weighted sampling without replacement.

    Exponential-race form: the k smallest ``E_i / w_i`` follow the same law as
    drawing one index at a time proportionally to the remaining weights.
    Zero-weight indices only fill in, uniformly, once positive ones run out.
    """
    n = weights.shape[0]
    e = rng.exponential(size=n)
    tie = rng.random(n)
    with np.errstate(divide="ignore"):
        keys = np.where(weights > 0, e / np.where(weights > 0, weights, 1.0), np.inf)
    order = np.lexsort((tie, keys))
    return np.sort(order[:k])


def _admissible(word: int, dtype) -> bool:
    return word != 0 and special_of(word, dtype) is None


def sample_nonspecial_mask(profile: ErrorProfile, dtype, golden_bits: int,
                           rng: np.random.Generator, model: Optional[BitModel] = None) -> MaskDraw:
    """Flip mask for one NonSpecial corruption of ``golden_bits``.

    Draws k from the count distribution, then k positions weighted by the
    per-position rates.  Masks that would produce zero or a special value are
    redrawn (same k) up to 16 times; after that the last mask gets the
    lowest-weight single bit toggled that makes the result admissible.
    """
    lay = layout_of(dtype)
    width = lay.width_bits
    model = model or BitModel.of(profile, width)
    k = int(np.searchsorted(model.count_cdf, rng.random(), side="right"))
    k = min(max(k, 1), width)
    weights = model.weights

    mask = 0
    for attempt in range(MAX_REDRAWS + 1):
        mask = 0
        for b in weighted_positions(weights, k, rng):
            mask |= 1 << int(b)
        if _admissible(golden_bits ^ mask, lay.dtype):
            return MaskDraw(mask, attempt)

    adds = [b for b in model.by_weight if not mask >> b & 1]
    removes = [b for b in model.by_weight if mask >> b & 1]
    for b in adds + removes:
        candidate = mask ^ (1 << b)
        if candidate and _admissible(golden_bits ^ candidate, lay.dtype):
            return MaskDraw(candidate, MAX_REDRAWS + 1)
    raise NoAdmissibleMask(f"no admissible NonSpecial mask for 0x{golden_bits:x} ({lay.dtype})")


# -- log ----------------------------------------------------------------------

@dataclass(frozen=True)
class InjectionEvent:
    element_index: int
    lane: int
    category: Category
    xor_mask: int
    retries_used: int = 0

    def to_json(self):
        return {
            "index": self.element_index,
            "lane": self.lane,
            "category": self.category.value,
            "xor_mask": self.xor_mask,
            "retries_used": self.retries_used,
        }


@dataclass
class InjectionLog:
    seed: int
    profile_context: dict
    profile_hash: str
    dtype: str
    warp_size: int
    element_count: int
    events: list = field(default_factory=list)
    skipped_unobservable: int = 0

    @property
    def totals(self) -> dict:
        out = {c: 0 for c in CATEGORIES}
        for ev in self.events:
            out[ev.category] += 1
        return out

    @property
    def indices(self) -> np.ndarray:
        return np.array([ev.element_index for ev in self.events], dtype=np.int64)

    def summary(self) -> str:
        parts = " ".join(f"{c.value}={n}" for c, n in self.totals.items())
        return f"events={len(self.events)} {parts} skipped_unobservable={self.skipped_unobservable}"

    def to_json(self):
        return {
            "schema_version": LOG_SCHEMA_VERSION,
            "seed": self.seed,
            "profile": {"context": self.profile_context, "sha256": self.profile_hash},
            "dtype": self.dtype,
            "warp_size": self.warp_size,
            "element_count": self.element_count,
            "totals": {c.value: n for c, n in self.totals.items()},
            "skipped_unobservable": self.skipped_unobservable,
            "events": [ev.to_json() for ev in self.events],
        }

    @classmethod
    def from_json(cls, d):
        return cls(
            seed=d["seed"],
            profile_context=d["profile"]["context"],
            profile_hash=d["profile"]["sha256"],
            dtype=d["dtype"],
            warp_size=d["warp_size"],
            element_count=d["element_count"],
            events=[
                InjectionEvent(e["index"], e["lane"], Category(e["category"]), e["xor_mask"], e["retries_used"])
                for e in d["events"]
            ],
            skipped_unobservable=d["skipped_unobservable"],
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")) + "\n")

    @classmethod
    def load(cls, path) -> "InjectionLog":
        return cls.from_json(json.loads(Path(path).read_text()))


# -- driver -------------------------------------------------------------------

def _inject_chunk(golden: np.ndarray, chunk_index: int, chunk: range, seed: int,
                  thresholds: np.ndarray, profile: ErrorProfile, model, dtype, warp_size: int):
    rng = chunk_rng(seed, chunk_index)
    lanes = np.arange(chunk.start, chunk.stop) % warp_size
    u = rng.random(len(chunk))
    codes = _pick(thresholds[lanes], u)
    events, skipped = [], 0
    width = layout_of(dtype).width_bits
    for off in np.flatnonzero(codes >= 0):
        idx = chunk.start + int(off)
        lane = int(lanes[off])
        code = int(codes[off])
        g = int(golden[idx])
        if code == _NS:
            mask, retries = sample_nonspecial_mask(profile, dtype, g, rng, model)
        else:
            draw = int(rng.integers(0, 1 << width)) if code == _NAN else 0
            try:
                mask, retries = g ^ make_corrupted(CATEGORIES[code], g, dtype, draw), 0
            except UnobservableInjection:
                skipped += 1
                continue
        events.append(InjectionEvent(idx, lane, CATEGORIES[code], mask, retries))
    return events, skipped


def inject(image: MemoryImage, profile: ErrorProfile, seed: int, threads=None):
    """Corrupt a copy of ``image`` according to ``profile``.

    Returns ``(corrupted_image, log)``.  The corrupted image differs from the
    input exactly at the logged indices.
    """
    if image.dtype != profile.context.dtype:
        raise ContextMismatch(f"image dtype {image.dtype} vs profile dtype {profile.context.dtype}")
    if image.warp_size != profile.warp_size:
        raise ContextMismatch(f"image warp size {image.warp_size} vs profile {profile.warp_size}")
    seed = int(seed)
    if not 0 <= seed < 1 << 64:
        raise ValueError("seed must be a 64-bit unsigned integer")

    W = profile.warp_size
    thresholds = _thresholds(lane_rates(profile))
    log = InjectionLog(
        seed=seed,
        profile_context=profile.context.to_json(),
        profile_hash=profile.content_hash(),
        dtype=image.dtype.value,
        warp_size=W,
        element_count=image.element_count,
    )
    golden = np.asarray(image.data)
    if profile.corruption_rate == 0 or image.element_count == 0:
        return image.with_data(golden.copy()), log

    width = layout_of(image.dtype).width_bits
    model = BitModel.of(profile, width) if profile.category_dist[Category.NON_SPECIAL] > 0 else None
    chunks = list(enumerate(plan_chunks(image.element_count, W)))
    batches = [chunks[i:i + CHUNKS_PER_TASK] for i in range(0, len(chunks), CHUNKS_PER_TASK)]

    def work(batch):
        return [_inject_chunk(golden, ci, chunk, seed, thresholds, profile, model, image.dtype, W)
                for ci, chunk in batch]

    for results in _threads.ordered_map(work, batches, threads):
        for events, skipped in results:
            log.events.extend(events)
            log.skipped_unobservable += skipped

    out = golden.copy()
    if log.events:
        idx = log.indices
        masks = np.array([ev.xor_mask for ev in log.events], dtype=out.dtype)
        out[idx] = out[idx] ^ masks
    return image.with_data(out).with_meta(source=f"inject(seed={seed})"), log
