from .fixtures import FIXTURES, fixture_names, fixture_profile
from .kernels import BenchmarkSpec, FunctionalUnit, Op, elementwise, gemm, make_golden, round_to_format, run_kernel
from .stimulus import (
    LFSR16_TAPS,
    LFSR32_TAPS,
    StimulusKind,
    StimulusStream,
    gen_stimulus,
    lfsr_period,
    lfsr_step,
    mt19937_words,
    utp_patterns,
)

__all__ = [
    "BenchmarkSpec", "FIXTURES", "FunctionalUnit", "LFSR16_TAPS", "LFSR32_TAPS", "Op",
    "StimulusKind", "StimulusStream", "elementwise", "fixture_names", "fixture_profile",
    "gemm", "gen_stimulus", "lfsr_period", "lfsr_step", "make_golden", "mt19937_words",
    "round_to_format", "run_kernel", "utp_patterns",
]
