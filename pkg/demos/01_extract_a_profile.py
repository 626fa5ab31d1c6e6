"""
Extracting an error profile from a golden/corrupted pair
========================================================

A reference kernel produces a golden output image.  We corrupt a copy by
hand, diff the two images, and fold the diff into a profile accumulator.
"""
import numpy as np

from sdc_forge import DType, diff_images, finalize, observe
from sdc_forge.profile import HardwareUnit, ProfileAccumulator, ProfileContext
from sdc_forge.report import profile_tables, render_tables
from sdc_forge.synth import BenchmarkSpec, run_kernel

# FP32 FMA over 4096 elements, operands from the Mersenne Twister streams
spec = BenchmarkSpec("ALU", "MT", "FMA", "FP32", n=4096, seed=1)
golden = run_kernel(spec)
print(golden, spec.benchmark_id)

# a few hand-made corruptions: two zeroed words, one INF, three bit flips
words = golden.data.copy()
words[[0, 32]] = 0
words[5] = 0x7F800000
words[[7, 39, 71]] ^= np.uint32(0b101)
corrupted = golden.with_data(words)

diffs = diff_images(golden, corrupted)
for rec in diffs:
    print(rec.element_index, rec.lane, rec.category.value, hex(rec.xor_mask), rec.flip_count)

# accumulators hold plain counts, so campaigns can be merged later
ctx = ProfileContext(HardwareUnit.ALU, DType.FP32, spec.benchmark_id)
acc = observe(ProfileAccumulator(ctx, golden.warp_size), diffs, golden.element_count)
profile = finalize(acc)

tables = profile_tables(profile)
print(render_tables({"category_dist": tables["category_dist"]}))

# the bit model only sees NonSpecial corruptions: bits 0 and 2 always flip
header, rows = tables["position_rate"]
print(render_tables({"position_rate (bits 0-3)": (header, rows[:4])}))
