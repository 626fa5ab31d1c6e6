import json

import numpy as np
import pytest

from sdc_forge.cli import main
from sdc_forge.formats import Category, DType
from sdc_forge.image import ImageMeta, MemoryImage, load_image, store_image
from sdc_forge.profile import ErrorProfile, HardwareUnit, ProfileContext, load_accumulator, load_profile, save_profile


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def golden_file(path, n=256):
    words = np.arange(1, n + 1, dtype=np.uint32) | np.uint32(0x3F000000)
    store_image(MemoryImage(DType.FP32, words, ImageMeta(benchmark_id="bench")), path)
    return words


def test_extract_identical_is_benign(work, capsys):
    golden_file(work / "g.img")
    assert main(["extract", "--golden", "g.img", "--corrupted", "g.img", "--out-diff", "d.csv"]) == 0
    out = capsys.readouterr().out
    assert "outcome: Benign" in out
    assert (work / "d.csv").read_text().strip().count("\n") == 0  # header only


def test_extract_one_nullified(work, capsys):
    words = golden_file(work / "g.img")
    bad = words.copy()
    bad[5] = 0
    store_image(MemoryImage(DType.FP32, bad), work / "c.img")
    rc = main(["extract", "--golden", "g.img", "--corrupted", "c.img", "--dtype", "FP32",
               "--unit", "L1Data", "--out-diff", "d.csv", "--out-accumulator", "a.json"])
    assert rc == 0
    acc = load_accumulator(work / "a.json")
    assert acc.category_counts[Category.NULLIFIED.code] == 1 and acc.corruption_total == 1
    assert acc.element_total == 256
    assert acc.context.hardware_unit is HardwareUnit.L1_DATA
    lines = (work / "d.csv").read_text().splitlines()
    assert lines[1].split(",")[:2] == ["5", "5"] and "Nullified" in lines[1]
    assert "outcome: SDC" in capsys.readouterr().out


def test_extract_hang_dominates(work, capsys):
    golden_file(work / "g.img")
    rc = main(["extract", "--golden", "g.img", "--corrupted", "g.img",
               "--runtime", "2.5", "--fault-free-runtime", "1.0"])
    assert rc == 0 and "outcome: Hang" in capsys.readouterr().out


def test_extract_due(work, capsys):
    golden_file(work / "g.img")
    assert main(["extract", "--golden", "g.img", "--corrupted", "g.img", "--due"]) == 0
    assert "outcome: DUE" in capsys.readouterr().out


def test_extract_size_mismatch_is_usage_error(work):
    golden_file(work / "g.img")
    golden_file(work / "c.img", n=10)
    assert main(["extract", "--golden", "g.img", "--corrupted", "c.img"]) == 2


def test_profile_build_merge_show(work, capsys):
    golden_file(work / "g.img")
    assert main(["synth", "profile", "--fixture", "paper-aggregate-fp32", "--out", "p.json"]) == 0
    assert main(["inject", "--image", "g.img", "--profile", "p.json", "--log", "l.json",
                 "--out", "c.img", "--seed", "3"]) == 0
    assert main(["extract", "--golden", "g.img", "--corrupted", "c.img", "--out-accumulator", "a.json"]) == 0
    empty = work / "e.json"
    acc = load_accumulator(work / "a.json")
    e = acc.to_json()
    e["element_total"] = 0
    e["category_counts"] = {k: 0 for k in e["category_counts"]}
    e["bit_position_counts"] = [0] * 32
    e["flip_count_counts"] = [0] * 33
    e["lane_counts"] = {k: [0] * 32 for k in e["lane_counts"]}
    empty.write_text(json.dumps(e))

    assert main(["profile", "build", "a.json", "--out", "p1.json"]) == 0
    assert main(["profile", "merge", "a.json", "e.json", "--out", "m.json"]) == 0
    assert main(["profile", "build", "m.json", "--out", "p2.json"]) == 0
    assert load_profile(work / "p1.json") == load_profile(work / "p2.json")
    assert main(["profile", "build", "e.json", "--out", "p3.json"]) != 0

    capsys.readouterr()
    assert main(["profile", "show", "p1.json", "--format", "csv"]) == 0
    out = capsys.readouterr().out
    names = [line[2:] for line in out.splitlines() if line.startswith("# ")]
    assert names == ["category_dist", "position_rate", "count_dist", "lane_weights"]


def test_profile_build_from_fixture_accumulator(work):
    shares = {"Nullified": 5068, "NonSpecial": 4831, "NaN": 39, "PlusInf": 49, "MinusInf": 13}
    lanes = {k: [v] + [0] * 31 for k, v in shares.items()}
    doc = {
        "schema_version": 1, "kind": "accumulator",
        "context": {"unit": "ALU", "dtype": "FP32", "kernel": None},
        "warp_size": 32, "element_total": 100000, "category_counts": shares,
        "bit_position_counts": [4831] + [0] * 31,
        "flip_count_counts": [0, 4831] + [0] * 31, "lane_counts": lanes,
    }
    (work / "a.json").write_text(json.dumps(doc))
    assert main(["profile", "build", "a.json", "--out", "p.json"]) == 0
    prof = load_profile(work / "p.json")
    assert prof.category_dist[Category.NULLIFIED] == pytest.approx(0.5068)
    assert prof.category_dist[Category.MINUS_INF] == pytest.approx(0.0013)


def test_inject_rate_zero_is_identity(work):
    golden_file(work / "g.img")
    prof = ErrorProfile(ProfileContext(HardwareUnit.ALU, DType.FP32, None), 0.0,
                        {Category.NULLIFIED: 1.0}, None, None, {Category.NULLIFIED: np.full(32, 1 / 32)})
    save_profile(prof, work / "p.json")
    assert main(["inject", "--image", "g.img", "--profile", "p.json", "--log", "l.json", "--out", "c.img"]) == 0
    assert (work / "c.img").read_bytes() == (work / "g.img").read_bytes()
    assert json.loads((work / "l.json").read_text())["events"] == []


def test_inject_is_repeatable(work):
    golden_file(work / "g.img", n=5000)
    main(["synth", "profile", "--fixture", "paper-aggregate-fp32", "--out", "p.json"])
    for tag in "ab":
        assert main(["--seed", "9", "inject", "--image", "g.img", "--profile", "p.json",
                     "--log", f"l{tag}.json", "--out", f"c{tag}.img"]) == 0
    assert (work / "ca.img").read_bytes() == (work / "cb.img").read_bytes()
    assert (work / "la.json").read_bytes() == (work / "lb.json").read_bytes()


def test_inject_rate_overflow_names_lane(work, capsys):
    golden_file(work / "g.img")
    prof = ErrorProfile(ProfileContext(HardwareUnit.ALU, DType.FP32, None), 0.5,
                        {Category.NULLIFIED: 1.0}, None, None, {Category.NULLIFIED: np.eye(32)[7]})
    save_profile(prof, work / "p.json")
    rc = main(["inject", "--image", "g.img", "--profile", "p.json", "--log", "l.json", "--out", "c.img"])
    assert rc != 0
    assert "lane 7" in capsys.readouterr().err


def test_synth_golden(work):
    assert main(["synth", "golden", "--op", "GEMM_A", "--dtype", "FP32", "--dims", "4x5x5",
                 "--seed", "2", "--out", "g.img"]) == 0
    img = load_image(work / "g.img")
    assert img.element_count == 20 and img.dtype is DType.FP32
    assert main(["synth", "golden", "--op", "FMA", "--dtype", "UINT8", "--gen", "LFSR",
                 "--dims", "64", "--seed", "1", "--out", "u.img"]) == 0
    assert main(["synth", "golden", "--op", "FMA", "--dtype", "FP32", "--gen", "LFSR",
                 "--dims", "64", "--seed", "0", "--out", "z.img"]) == 2
    assert load_image(work / "u.img").dtype is DType.UINT32


def test_synth_golden_bad_dims(work):
    assert main(["synth", "golden", "--op", "GEMM_A", "--dtype", "FP32", "--dims", "4x5x6", "--out", "g.img"]) == 2
    assert main(["synth", "golden", "--op", "FMA", "--dtype", "FP32", "--dims", "2x2", "--out", "g.img"]) == 2


def test_synth_profile_unknown_fixture(work):
    assert main(["synth", "profile", "--fixture", "nope", "--out", "p.json"]) == 2


def test_validate_passes_with_enough_samples(capsys):
    rc = main(["validate", "roundtrip", "--fixture", "paper-aggregate-fp32",
               "--elements", "1000000", "--tolerance", "0.01", "--seed", "1"])
    assert rc == 0
    assert capsys.readouterr().out.strip().endswith("PASS")


def test_validate_fails_with_too_few_samples():
    assert main(["validate", "roundtrip", "--fixture", "paper-aggregate-fp32",
                 "--elements", "100", "--tolerance", "0.001"]) == 1


def test_validate_rate_zero(work, capsys):
    prof = ErrorProfile(ProfileContext(HardwareUnit.ALU, DType.FP32, None), 0.0,
                        {Category.NULLIFIED: 1.0}, None, None, {Category.NULLIFIED: np.full(32, 1 / 32)})
    save_profile(prof, work / "p.json")
    rc = main(["validate", "roundtrip", "--profile", "p.json", "--elements", "1000", "--tolerance", "0.1"])
    assert rc == 1
    assert "no corruptions to compare" in capsys.readouterr().err


def test_usage_errors():
    assert main([]) == 2
    assert main(["bogus"]) == 2
    assert main(["profile", "build", "missing.json"]) == 2
