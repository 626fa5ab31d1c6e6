"""
Warp-aligned periodicity
========================

Lane weights confine corruptions to particular lanes of a warp.  Here
NonSpecial flips land on every 8th lane and nullifications on every 16th,
and the extracted lane histogram shows the same comb.
"""
import numpy as np

from sdc_forge import Category, DType, diff_images, finalize, observe
from sdc_forge.inject import inject
from sdc_forge.profile import ProfileAccumulator
from sdc_forge.synth import fixture_profile, make_golden

profile = fixture_profile("l1miss-period8-nonspecial")
golden = make_golden(300_000, DType.FP32, seed=3)
corrupted, log = inject(golden, profile, seed=3)

diffs = diff_images(golden, corrupted)
acc = observe(ProfileAccumulator(profile.context, profile.warp_size), diffs, golden.element_count)
recovered = finalize(acc)

for cat in (Category.NON_SPECIAL, Category.NULLIFIED):
    hist = acc.lane_counts[cat.code]
    lanes = np.flatnonzero(hist)
    print(f"{cat.value:11s} lanes hit: {lanes.tolist()}  counts: {hist[lanes].tolist()}")
    print(f"{'':11s} recovered weights: {np.round(recovered.lane_weights[cat][lanes], 3).tolist()}")
