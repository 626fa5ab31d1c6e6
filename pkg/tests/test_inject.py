import numpy as np
import pytest
from scipy import stats

from sdc_forge.errors import ContextMismatch, RateOverflow
from sdc_forge.formats import CATEGORIES, Category, DType, classify_words, popcount
from sdc_forge.image import ImageMeta, MemoryImage, diff_images
from sdc_forge.inject import (
    MAX_REDRAWS,
    BitModel,
    InjectionLog,
    inject,
    lane_rates,
    plan_chunks,
    sample_event,
    sample_nonspecial_mask,
    weighted_positions,
)
from sdc_forge.profile import ErrorProfile, HardwareUnit, ProfileContext
from sdc_forge.synth import fixture_profile, make_golden

from oracles import successive_sampling_inclusion


def make_profile(dtype=DType.FP32, rate=0.5, dist=None, q=None, p=None, lanes=None, w=32):
    dist = dist or {Category.NON_SPECIAL: 1.0}
    lanes = lanes or {c: np.full(w, 1.0 / w) for c, v in dist.items() if v > 0}
    return ErrorProfile(ProfileContext(HardwareUnit.ALU, dtype, None), rate, dist, p, q, lanes, w).validate()


def count_dist(width, mass):
    q = np.zeros(width + 1)
    for k, v in mass.items():
        q[k] = v
    return q


@pytest.mark.parametrize("n,w,expected", [
    (64, 32, [(0, 32), (32, 64)]),
    (33, 32, [(0, 32), (32, 33)]),
    (0, 32, []),
])
def test_plan_chunks(n, w, expected):
    assert [(r.start, r.stop) for r in plan_chunks(n, w)] == expected


def test_rate_one_nullifies_everything():
    prof = make_profile(rate=1.0, dist={Category.NULLIFIED: 1.0})
    rng = np.random.default_rng(0)
    assert all(sample_event(prof, lane % 32, rng) is Category.NULLIFIED for lane in range(200))
    golden = make_golden(500, DType.FP32)
    out, log = inject(golden, prof, 3)
    assert not out.data.any()
    assert len(log.events) == 500


def test_rate_zero_is_identity():
    prof = make_profile(rate=0.0, dist={Category.NULLIFIED: 1.0})
    rng = np.random.default_rng(0)
    assert all(sample_event(prof, lane % 32, rng) is None for lane in range(200))
    golden = make_golden(500, DType.FP32)
    out, log = inject(golden, prof, 3)
    assert np.array_equal(out.data, golden.data) and log.events == []


def test_rate_overflow_names_lane():
    lanes = {Category.NULLIFIED: np.eye(32)[5]}
    prof = make_profile(rate=0.1, dist={Category.NULLIFIED: 1.0}, lanes=lanes)
    with pytest.raises(RateOverflow) as exc:
        lane_rates(prof)
    assert exc.value.lane == 5


def test_context_mismatch():
    with pytest.raises(ContextMismatch):
        inject(make_golden(64, DType.FP16), fixture_profile("paper-aggregate-fp32"), 1)


def test_category_frequencies_within_six_sigma():
    prof = fixture_profile("paper-aggregate-fp32")
    n = 200_000
    _, log = inject(make_golden(n, DType.FP32), prof, 11)
    for c, got in log.totals.items():
        p = prof.corruption_rate * prof.category_dist[c]
        sigma = np.sqrt(p * (1 - p) / n)
        assert abs(got / n - p) <= 6 * sigma + 1e-12, c


def test_single_position_forced_k():
    q = count_dist(16, {1: 1.0})
    prof = make_profile(DType.FP16, q=q, p=np.full(16, 1 / 16))
    rng = np.random.default_rng(2)
    seen = set()
    for _ in range(400):
        draw = sample_nonspecial_mask(prof, DType.FP16, 0x0000, rng)
        assert bin(draw.mask).count("1") == 1
        seen.add(draw.mask)
    assert len(seen) > 8


def test_full_width_mask_takes_fallback():
    q = count_dist(16, {16: 1.0})
    prof = make_profile(DType.FP16, q=q, p=np.full(16, 1 / 16))
    draw = sample_nonspecial_mask(prof, DType.FP16, 0x0000, np.random.default_rng(0))
    assert draw.retries_used == MAX_REDRAWS + 1
    assert classify_words(np.array([draw.mask], dtype=np.uint16), DType.FP16)[0] == Category.NON_SPECIAL.code


def test_fallback_is_logged():
    q = count_dist(16, {16: 1.0})
    prof = make_profile(DType.FP16, rate=0.5, q=q, p=np.full(16, 1 / 16))
    golden = MemoryImage(DType.FP16, np.zeros(64, dtype=np.uint16))
    # golden zero words: NonSpecial is still observable (corrupted value is nonzero)
    _, log = inject(golden, prof, 1)
    assert log.events and all(ev.retries_used > 0 for ev in log.events)


def test_weighted_positions_match_enumerated_law():
    w = np.array([0.9] + [0.1 / 15] * 15)
    k, trials = 2, 100_000
    rng = np.random.default_rng(123)
    hits = np.zeros(16)
    for _ in range(trials):
        hits[weighted_positions(w, k, rng)] += 1
    expected = np.array(successive_sampling_inclusion(w, k))
    sigma = np.sqrt(expected * (1 - expected) / trials)
    assert np.all(np.abs(hits / trials - expected) <= 6 * sigma)
    # bit 0 is almost always drawn, but not always
    assert 0.95 < hits[0] / trials < 1.0


def test_weighted_positions_small_case_all_pairs():
    w = np.array([0.5, 0.3, 0.15, 0.05])
    rng = np.random.default_rng(7)
    trials = 60_000
    counts = {}
    for _ in range(trials):
        key = tuple(weighted_positions(w, 2, rng))
        counts[key] = counts.get(key, 0) + 1
    total = w.sum()
    for (i, j), n in counts.items():
        law = w[i] / total * w[j] / (total - w[i]) + w[j] / total * w[i] / (total - w[j])
        assert abs(n / trials - law) <= 6 * np.sqrt(law * (1 - law) / trials)


def test_zero_weights_only_fill_in():
    w = np.array([1.0, 0.0, 2.0, 0.0])
    rng = np.random.default_rng(0)
    for _ in range(100):
        assert set(weighted_positions(w, 2, rng)) == {0, 2}
        assert {0, 2} <= set(weighted_positions(w, 3, rng))


def test_popcounts_follow_count_dist():
    prof = fixture_profile("paper-aggregate-fp32")
    model = BitModel.of(prof, 32)
    rng = np.random.default_rng(9)
    goldens = make_golden(20_000, DType.FP32, seed=4).data
    ks = np.array([bin(sample_nonspecial_mask(prof, DType.FP32, int(g), rng, model).mask).count("1")
                   for g in goldens])
    observed = np.bincount(ks, minlength=33)[1:]
    expected = prof.count_dist[1:] * len(ks)
    keep = expected >= 5
    obs = np.append(observed[keep], observed[~keep].sum())
    exp = np.append(expected[keep], expected[~keep].sum())
    assert stats.chisquare(obs, exp * obs.sum() / exp.sum()).pvalue > 1e-4


def test_deterministic_across_threads():
    prof = fixture_profile("paper-aggregate-fp32")
    golden = make_golden(100_000, DType.FP32)
    a, la = inject(golden, prof, 42, threads=1)
    b, lb = inject(golden, prof, 42, threads=4)
    assert a == b and la.to_json() == lb.to_json()
    c, _ = inject(golden, prof, 43)
    assert not np.array_equal(a.data, c.data)


def test_log_audits_the_image(tmp_path):
    prof = fixture_profile("paper-aggregate-fp32")
    golden = make_golden(50_000, DType.FP32)
    out, log = inject(golden, prof, 5)
    d = diff_images(golden, out)
    assert np.array_equal(d.index, log.indices)
    assert np.array_equal(d.xor, np.array([e.xor_mask for e in log.events], dtype=np.uint32))
    assert [CATEGORIES[c] for c in d.category] == [e.category for e in log.events]
    assert log.profile_hash == prof.content_hash()
    log.save(tmp_path / "log.json")
    assert InjectionLog.load(tmp_path / "log.json").to_json() == log.to_json()


def test_nonspecial_masks_never_create_specials():
    prof = fixture_profile("paper-aggregate-fp16")
    golden = make_golden(50_000, DType.FP16)
    out, log = inject(golden, prof, 8)
    d = diff_images(golden, out)
    ns = np.array([e.category is Category.NON_SPECIAL for e in log.events])
    assert np.all(d.category[ns] == Category.NON_SPECIAL.code)


def test_unobservable_injections_are_skipped():
    prof = make_profile(rate=1.0, dist={Category.NULLIFIED: 1.0})
    golden = MemoryImage(DType.FP32, np.array([0, 1, 0, 2], dtype=np.uint32), ImageMeta(warp_size=32))
    _, log = inject(golden, prof, 0)
    assert log.skipped_unobservable == 2
    assert [e.element_index for e in log.events] == [1, 3]


def test_periodic_lanes():
    prof = fixture_profile("l1miss-period8-nonspecial")
    _, log = inject(make_golden(100_000, DType.FP32), prof, 3)
    for e in log.events:
        stride = 8 if e.category is Category.NON_SPECIAL else 16
        assert e.element_index % stride == 0


def test_mask_popcounts_stay_in_count_support():
    prof = fixture_profile("paper-nonspecial-fp32")
    _, log = inject(make_golden(5000, DType.FP32), prof, 1)
    masks = np.array([e.xor_mask for e in log.events], dtype=np.uint32)
    assert np.all(prof.count_dist[popcount(masks)] > 0)
