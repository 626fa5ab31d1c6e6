"""``sdc-forge`` command line: extract, profile, inject, synth, validate.

Exit codes: 0 success, 1 validation/statistical failure, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import __version__
from .errors import SdcForgeError
from .formats import CATEGORIES, layout_of
from .image import RunMeta, classify_outcome, iter_diff, load_image, store_image
from .inject import inject
from .profile import (
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
from .report import profile_tables, render_tables, roundtrip
from .synth import BenchmarkSpec, fixture_names, fixture_profile, run_kernel

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _common():
    """Global flags, also accepted after the subcommand."""
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--warp-size", type=int, default=argparse.SUPPRESS)
    p.add_argument("--out", default=argparse.SUPPRESS)
    p.add_argument("--format", choices=("text", "csv"), default=argparse.SUPPRESS)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="sdc-forge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--warp-size", type=int, default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--format", choices=("text", "csv"), default="text")
    sub = parser.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("extract", parents=[common], help="diff golden vs corrupted images")
    ex.add_argument("--golden", required=True)
    ex.add_argument("--corrupted", required=True)
    ex.add_argument("--dtype")
    ex.add_argument("--unit")
    ex.add_argument("--kernel")
    ex.add_argument("--out-diff")
    ex.add_argument("--out-accumulator")
    ex.add_argument("--runtime", type=float)
    ex.add_argument("--fault-free-runtime", type=float)
    ex.add_argument("--due", action="store_true")
    ex.set_defaults(func=cmd_extract)

    pr = sub.add_parser("profile", help="build, merge or show profiles")
    prs = pr.add_subparsers(dest="action", required=True)
    b = prs.add_parser("build", parents=[common], help="finalise accumulators into a profile")
    b.add_argument("accumulators", nargs="+")
    b.set_defaults(func=cmd_profile_build)
    m = prs.add_parser("merge", parents=[common], help="sum accumulators")
    m.add_argument("accumulators", nargs="+")
    m.set_defaults(func=cmd_profile_merge)
    s = prs.add_parser("show", parents=[common], help="print profile distributions")
    s.add_argument("profile")
    s.set_defaults(func=cmd_profile_show)

    inj = sub.add_parser("inject", parents=[common], help="inject a profile into an image")
    inj.add_argument("--image", required=True)
    inj.add_argument("--profile", required=True)
    inj.add_argument("--log", required=True)
    inj.set_defaults(func=cmd_inject)

    sy = sub.add_parser("synth", help="generate golden images or fixture profiles")
    sys_ = sy.add_subparsers(dest="action", required=True)
    g = sys_.add_parser("golden", parents=[common], help="run a reference kernel")
    g.add_argument("--op", required=True)
    g.add_argument("--dtype", required=True)
    g.add_argument("--gen", default="MT")
    g.add_argument("--dims", required=True, help="n for elementwise ops, MxNxK for GEMM")
    g.add_argument("--unit", default="ALU", choices=("ALU", "Tensor"))
    g.add_argument("--alpha", type=float, default=1.0)
    g.add_argument("--beta", type=float, default=1.0)
    g.set_defaults(func=cmd_synth_golden)
    f = sys_.add_parser("profile", parents=[common], help="export a built-in fixture profile")
    f.add_argument("--fixture", required=True, help=", ".join(fixture_names()))
    f.set_defaults(func=cmd_synth_profile)

    va = sub.add_parser("validate", help="statistical self-checks")
    vas = va.add_subparsers(dest="action", required=True)
    rt = vas.add_parser("roundtrip", parents=[common], help="inject, re-extract and compare")
    src = rt.add_mutually_exclusive_group(required=True)
    src.add_argument("--profile")
    src.add_argument("--fixture")
    rt.add_argument("--elements", type=int, required=True)
    rt.add_argument("--tolerance", type=float, required=True,
                    help="TV-distance bound on the category distribution")
    rt.add_argument("--count-tolerance", type=float)
    rt.add_argument("--lane-tolerance", type=float)
    rt.set_defaults(func=cmd_validate_roundtrip)
    return parser


def _require_out(args, what):
    if not args.out:
        raise UsageError(f"--out is required to write the {what}")
    return Path(args.out)


# -- subcommands --------------------------------------------------------------

def cmd_extract(args) -> int:
    golden = load_image(args.golden, dtype=args.dtype)
    corrupted = load_image(args.corrupted, dtype=args.dtype)
    if args.warp_size is not None:
        golden = golden.with_meta(warp_size=args.warp_size)
        corrupted = corrupted.with_meta(warp_size=args.warp_size)
    unit = HardwareUnit.parse(args.unit or golden.meta.hardware_unit)
    kernel = args.kernel or golden.meta.benchmark_id or None
    acc = ProfileAccumulator(ProfileContext(unit, golden.dtype, kernel), golden.warp_size)

    width = layout_of(golden.dtype).width_bits
    hexw = (width + 3) // 4
    n_diff = 0
    diff_fh = open(args.out_diff, "w", newline="") if args.out_diff else None
    try:
        writer = csv.writer(diff_fh) if diff_fh else None
        if writer:
            writer.writerow(["index", "lane", "golden", "corrupted", "xor", "category", "flip_count"])
        # the whole image's element count is credited once, with the first window
        for i, part in enumerate(iter_diff(golden, corrupted)):
            acc = observe(acc, part, golden.element_count if i == 0 else 0)
            n_diff += len(part)
            if writer:
                for r in part:
                    writer.writerow([r.element_index, r.lane, f"0x{r.golden_bits:0{hexw}x}",
                                     f"0x{r.corrupted_bits:0{hexw}x}", f"0x{r.xor_mask:0{hexw}x}",
                                     r.category.value, r.flip_count])
    finally:
        if diff_fh:
            diff_fh.close()

    run = None
    if args.runtime is not None or args.fault_free_runtime is not None:
        if args.runtime is None or args.fault_free_runtime is None:
            raise UsageError("--runtime and --fault-free-runtime go together")
        run = RunMeta(args.runtime, args.fault_free_runtime, args.due)
    elif args.due:
        run = RunMeta(1.0, 1.0, True)
    outcome = classify_outcome(run, n_diff)

    if args.out_accumulator:
        save_accumulator(acc, args.out_accumulator)
    rate = n_diff / golden.element_count if golden.element_count else 0.0
    print(f"outcome: {outcome}")
    print(f"diffs: {n_diff} of {golden.element_count} elements (rate {rate:.6g})")
    counts = " ".join(f"{c}={int(acc.category_counts[i])}" for i, c in enumerate(CATEGORIES))
    print(f"categories: {counts}")
    return EXIT_OK


def _merged(paths):
    accs = [load_accumulator(p) for p in paths]
    total = accs[0]
    for a in accs[1:]:
        total = merge(total, a)
    return total


def cmd_profile_build(args) -> int:
    out = _require_out(args, "profile")
    profile = finalize(_merged(args.accumulators))
    save_profile(profile, out)
    print(f"profile: {out} corruptions={profile.sample_count} rate={profile.corruption_rate:.6g}")
    return EXIT_OK


def cmd_profile_merge(args) -> int:
    out = _require_out(args, "merged accumulator")
    acc = _merged(args.accumulators)
    save_accumulator(acc, out)
    print(f"accumulator: {out} elements={acc.element_total} corruptions={acc.corruption_total}")
    return EXIT_OK


def cmd_profile_show(args) -> int:
    profile = load_profile(args.profile)
    text = render_tables(profile_tables(profile), args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_inject(args) -> int:
    out = _require_out(args, "corrupted image")
    image = load_image(args.image)
    if args.warp_size is not None:
        image = image.with_meta(warp_size=args.warp_size)
    profile = load_profile(args.profile)
    corrupted, log = inject(image, profile, args.seed)
    store_image(corrupted, out)
    log.save(args.log)
    print(log.summary())
    return EXIT_OK


def _parse_dims(text, is_gemm):
    parts = [int(x) for x in text.lower().replace(",", "x").split("x") if x]
    if is_gemm:
        if len(parts) != 3:
            raise UsageError("GEMM dims are MxNxK")
        return {"m": parts[0], "n": parts[1], "k": parts[2]}
    if len(parts) != 1:
        raise UsageError("elementwise dims are a single element count")
    return {"n": parts[0]}


def cmd_synth_golden(args) -> int:
    out = _require_out(args, "golden image")
    op = args.op.upper().replace("-", "_")
    dims = _parse_dims(args.dims, op.startswith("GEMM"))
    spec = BenchmarkSpec(args.unit, args.gen.upper(), op, args.dtype, alpha=args.alpha, beta=args.beta,
                         seed=args.seed, warp_size=args.warp_size or 32, **dims)
    image = run_kernel(spec)
    store_image(image, out)
    print(f"golden: {out} {image.dtype} elements={image.element_count} id={spec.benchmark_id}")
    return EXIT_OK


def cmd_synth_profile(args) -> int:
    out = _require_out(args, "fixture profile")
    save_profile(fixture_profile(args.fixture), out)
    print(f"profile: {out} fixture={args.fixture}")
    return EXIT_OK


def cmd_validate_roundtrip(args) -> int:
    profile = load_profile(args.profile) if args.profile else fixture_profile(args.fixture)
    try:
        report = roundtrip(profile, args.elements, args.seed, args.tolerance,
                           args.count_tolerance, args.lane_tolerance)
    except ValueError as exc:
        if isinstance(exc, SdcForgeError):
            raise
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    text = report.render()
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return EXIT_OK if report.passed else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (SdcForgeError, UsageError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
