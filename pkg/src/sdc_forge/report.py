"""Tabular views of profiles and the inject-then-extract round-trip check."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .formats import CATEGORIES
from .image import diff_images
from .inject import inject
from .profile import ErrorProfile, ProfileAccumulator, finalize, observe


def tv_distance(p, q) -> float:
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    return 0.5 * float(np.abs(p - q).sum())


# -- tables -------------------------------------------------------------------

def profile_tables(profile: ErrorProfile) -> dict[str, tuple[list[str], list[list]]]:
    """Name -> (header, rows) for every distribution held by ``profile``."""
    tables = {
        "category_dist": (
            ["category", "share", "rate_per_element"],
            [[c.value, profile.category_dist[c], profile.corruption_rate * profile.category_dist[c]]
             for c in CATEGORIES],
        ),
    }
    if profile.position_rate is not None:
        tables["position_rate"] = (
            ["bit", "flip_probability"],
            [[b, float(v)] for b, v in enumerate(profile.position_rate)],
        )
    if profile.count_dist is not None:
        tables["count_dist"] = (
            ["flip_count", "probability"],
            [[k, float(profile.count_dist[k])] for k in range(1, profile.count_dist.shape[0])],
        )
    observed = [c for c in CATEGORIES if c in profile.lane_weights]
    if observed:
        tables["lane_weights"] = (
            ["lane"] + [c.value for c in observed],
            [[lane] + [float(profile.lane_weights[c][lane]) for c in observed]
             for lane in range(profile.warp_size)],
        )
    return tables


def render_tables(tables, fmt: str = "text") -> str:
    out = io.StringIO()
    for name, (header, rows) in tables.items():
        if fmt == "csv":
            out.write(f"# {name}\n")
            w = csv.writer(out, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
            out.write("\n")
            continue
        cells = [[_fmt(v) for v in row] for row in rows]
        widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h)
                  for i, h in enumerate(header)]
        out.write(f"== {name} ==\n")
        out.write("  ".join(h.rjust(wd) for h, wd in zip(header, widths)) + "\n")
        for r in cells:
            out.write("  ".join(v.rjust(wd) for v, wd in zip(r, widths)) + "\n")
        out.write("\n")
    return out.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


# -- round trip ---------------------------------------------------------------

@dataclass
class Comparison:
    name: str
    distance: float
    tolerance: Optional[float] = None

    @property
    def passed(self) -> bool:
        return self.tolerance is None or self.distance <= self.tolerance


@dataclass
class RoundTripReport:
    elements: int
    events: int
    recovered: ErrorProfile
    comparisons: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.comparisons)

    def render(self) -> str:
        lines = [f"elements={self.elements} corruptions={self.events}"]
        for c in self.comparisons:
            gate = "report-only" if c.tolerance is None else f"tol={c.tolerance:g}"
            verdict = "" if c.tolerance is None else (" PASS" if c.passed else " FAIL")
            lines.append(f"{c.name:28s} {c.distance:.6f} ({gate}){verdict}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def roundtrip(profile: ErrorProfile, elements: int, seed: int, tolerance: float,
              count_tolerance: Optional[float] = None, lane_tolerance: Optional[float] = None,
              threads=None) -> RoundTripReport:
    """Inject ``profile`` into a synthetic golden, re-extract, compare distributions.

    ``tolerance`` gates the category distribution (TV distance); flip-count and
    lane-weight TV distances are gated only when their tolerances are given.
    Raises ValueError when nothing gets corrupted.
    """
    from .synth.kernels import make_golden

    if profile.corruption_rate == 0:
        raise ValueError("no corruptions to compare: profile corruption rate is 0")
    golden = make_golden(elements, profile.context.dtype, seed=seed, warp_size=profile.warp_size)
    corrupted, _ = inject(golden, profile, seed, threads=threads)
    diffs = diff_images(golden, corrupted, threads=threads)
    if len(diffs) == 0:
        raise ValueError(f"no corruptions to compare: none drawn over {elements} elements")
    acc = observe(ProfileAccumulator(profile.context, profile.warp_size), diffs, elements)
    rec = finalize(acc)

    comps = [Comparison("category_dist (TV)", tv_distance(profile.category_vector(), rec.category_vector()),
                        tolerance)]
    if profile.count_dist is not None and rec.count_dist is not None:
        comps.append(Comparison("count_dist (TV)", tv_distance(profile.count_dist, rec.count_dist),
                                count_tolerance))
    if profile.position_rate is not None and rec.position_rate is not None:
        comps.append(Comparison("position_rate (max abs)",
                                float(np.max(np.abs(profile.position_rate - rec.position_rate)))))
    for c in CATEGORIES:
        if c in profile.lane_weights and c in rec.lane_weights:
            comps.append(Comparison(f"lanes[{c.value}] (TV)",
                                    tv_distance(profile.lane_weights[c], rec.lane_weights[c]),
                                    lane_tolerance))
    return RoundTripReport(elements, len(diffs), rec, comps)
