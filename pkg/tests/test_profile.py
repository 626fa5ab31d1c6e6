import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdc_forge.errors import ContextMismatch, EmptyAccumulator, InvariantViolation, SchemaVersionMismatch
from sdc_forge.formats import CATEGORIES, Category, DType
from sdc_forge.image import DiffSet
from sdc_forge.profile import (
    HardwareUnit,
    ProfileAccumulator,
    ProfileContext,
    finalize,
    load_accumulator,
    load_profile,
    merge,
    observe,
    save_accumulator,
    save_profile,
)
from sdc_forge.synth.fixtures import AGGREGATE_SHARES, fixture_names, fixture_profile

CTX = ProfileContext(HardwareUnit.ALU, DType.FP32, "k")


def fresh(ctx=CTX, w=32):
    return ProfileAccumulator(ctx, w)


def diffset(index, golden, corrupted, w=32):
    return DiffSet(DType.FP32, w, index, golden, corrupted)


def random_diffs(rng, n_elements, n_diffs, offset=0):
    idx = np.sort(rng.choice(n_elements, n_diffs, replace=False)) + offset
    golden = rng.integers(1, 1 << 32, size=n_diffs, dtype=np.uint32)
    kind = rng.integers(0, 4, size=n_diffs)
    flips = rng.integers(1, 1 << 32, size=n_diffs, dtype=np.uint32)
    corrupted = np.where(kind == 0, 0, np.where(kind == 1, 0x7F800000, golden ^ flips)).astype(np.uint32)
    return diffset(idx, golden, corrupted)


def random_acc(rng):
    n = int(rng.integers(100, 400))
    return observe(fresh(), random_diffs(rng, n, int(rng.integers(1, 60))), n)


def test_nonspecial_record_updates_bit_model():
    acc = observe(fresh(), diffset([3], [0x3F800000], [0x3F800005]), 10)
    assert acc.flip_count_counts[2] == 1
    assert acc.bit_position_counts[0] == 1 and acc.bit_position_counts[2] == 1
    assert acc.bit_position_counts.sum() == 2
    assert acc.lane_counts[Category.NON_SPECIAL.code, 3] == 1


def test_nullified_record_skips_bit_model():
    acc = observe(fresh(), diffset([5], [0x3F800000], [0]), 10)
    assert acc.category_counts[Category.NULLIFIED.code] == 1
    assert acc.lane_counts[Category.NULLIFIED.code, 5] == 1
    assert acc.flip_count_counts.sum() == 0 and acc.bit_position_counts.sum() == 0


def test_empty_diff_only_counts_elements():
    acc = observe(fresh(), DiffSet.empty(DType.FP32), 1024)
    assert acc.element_total == 1024 and acc.corruption_total == 0


def test_observe_accepts_records():
    d = random_diffs(np.random.default_rng(1), 200, 30)
    assert observe(fresh(), list(d), 200) == observe(fresh(), d, 200)


def test_observe_context_mismatch():
    with pytest.raises(ContextMismatch):
        observe(fresh(w=16), diffset([0], [1], [2]), 4)


def test_finalize_arithmetic():
    d = diffset([0, 1, 2, 3], [1, 1, 1, 1], [0, 0, 0, 3])
    prof = finalize(observe(fresh(), d, 8))
    assert prof.corruption_rate == 0.5
    assert prof.category_dist[Category.NULLIFIED] == 0.75
    assert prof.category_dist[Category.NON_SPECIAL] == 0.25


def test_finalize_position_rate_one():
    d = diffset([0, 1, 2, 3], [2, 4, 6, 8], [3, 5, 7, 9])
    prof = finalize(observe(fresh(), d, 4))
    assert prof.position_rate[0] == 1.0
    assert prof.count_dist[1] == 1.0


def test_finalize_empty_raises():
    with pytest.raises(EmptyAccumulator):
        finalize(observe(fresh(), DiffSet.empty(DType.FP32), 100))


def test_nullified_only_profile_has_no_bit_model():
    prof = finalize(observe(fresh(), diffset([0, 1], [1, 2], [0, 0]), 2))
    assert prof.count_dist is None and prof.position_rate is None
    assert load_profile_roundtrip(prof) == prof


def load_profile_roundtrip(prof):
    return type(prof).from_json(json.loads(json.dumps(prof.to_json())))


def test_fixture_accumulator_reproduces_shares():
    counts = {c: round(v * 100000) for c, v in AGGREGATE_SHARES.items()}
    lanes = np.zeros((5, 32), dtype=np.int64)
    for c, n in counts.items():
        lanes[c.code, 0] = n
    acc = ProfileAccumulator(CTX, 32, 10**6, [counts[c] for c in CATEGORIES],
                             np.ones(32, dtype=np.int64), np.eye(33, dtype=np.int64)[1] * counts[Category.NON_SPECIAL],
                             lanes)
    prof = finalize(acc)
    for c, share in AGGREGATE_SHARES.items():
        assert prof.category_dist[c] == pytest.approx(share, abs=1e-12)


def test_merge_with_empty_is_identity():
    a = random_acc(np.random.default_rng(2))
    assert merge(a, fresh()) == a


def test_merge_context_mismatch():
    with pytest.raises(ContextMismatch):
        merge(fresh(), fresh(ProfileContext(HardwareUnit.ALU, DType.FP32, "other")))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_merge_commutes_and_associates(seed):
    rng = np.random.default_rng(seed)
    a, b, c = random_acc(rng), random_acc(rng), random_acc(rng)
    assert merge(a, b) == merge(b, a)
    assert merge(merge(a, b), c) == merge(a, merge(b, c))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_merge_equals_concatenated_observation(seed):
    rng = np.random.default_rng(seed)
    da, db = random_diffs(rng, 300, 40), random_diffs(rng, 200, 25, offset=300)
    a, b = observe(fresh(), da, 300), observe(fresh(), db, 200)
    whole = observe(fresh(), DiffSet.concat([da, db], DType.FP32, 32), 500)
    assert merge(a, b) == whole
    assert finalize(merge(a, b)) == finalize(whole)


def test_profile_save_load(tmp_path):
    prof = fixture_profile("paper-aggregate-fp32")
    save_profile(prof, tmp_path / "p.json")
    back = load_profile(tmp_path / "p.json")
    assert back == prof
    assert back.content_hash() == prof.content_hash()
    assert np.array_equal(back.count_dist, prof.count_dist)


def test_load_rejects_bad_count_dist(tmp_path):
    d = fixture_profile("paper-aggregate-fp32").to_json()
    q = np.array(d["bit_model"]["count_dist"])
    d["bit_model"]["count_dist"] = (q * 0.8).tolist()
    (tmp_path / "p.json").write_text(json.dumps(d))
    with pytest.raises(InvariantViolation):
        load_profile(tmp_path / "p.json")


def test_load_rejects_future_schema(tmp_path):
    d = fixture_profile("paper-aggregate-fp32").to_json()
    d["schema_version"] = 99
    (tmp_path / "p.json").write_text(json.dumps(d))
    with pytest.raises(SchemaVersionMismatch):
        load_profile(tmp_path / "p.json")


def test_accumulator_save_load(tmp_path):
    a = random_acc(np.random.default_rng(5))
    save_accumulator(a, tmp_path / "a.json")
    assert load_accumulator(tmp_path / "a.json") == a


def test_accumulator_rejects_inconsistent_lanes(tmp_path):
    d = random_acc(np.random.default_rng(6)).to_json()
    d["lane_counts"]["Nullified"][0] += 1
    (tmp_path / "a.json").write_text(json.dumps(d))
    with pytest.raises(InvariantViolation):
        load_accumulator(tmp_path / "a.json")


@pytest.mark.parametrize("name", fixture_names())
def test_fixtures_validate(name):
    fixture_profile(name).validate()


def test_aggregate_fixture_headlines():
    prof = fixture_profile("paper-aggregate-fp32")
    expected = {Category.NULLIFIED: .5068, Category.NON_SPECIAL: .4831, Category.NAN: .0039,
                Category.PLUS_INF: .0049, Category.MINUS_INF: .0013}
    for c, v in expected.items():
        assert prof.category_dist[c] == pytest.approx(v, abs=1e-12)
    assert prof.count_dist[1] == pytest.approx(0.38)
    assert prof.count_dist[2:].sum() > 0
    assert prof.count_dist[1] < 0.40


def test_l1miss_fixture_support():
    prof = fixture_profile("l1miss-period8-nonspecial")
    ns = prof.lane_weights[Category.NON_SPECIAL]
    nul = prof.lane_weights[Category.NULLIFIED]
    assert set(np.flatnonzero(ns)) <= {l for l in range(32) if l % 8 == 0}
    assert set(np.flatnonzero(nul)) <= {l for l in range(32) if l % 16 == 0}
