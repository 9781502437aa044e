"""Dataset forensics: chromaticity scatter, channel-maximum histograms, and
saturation clustering.

Illuminants are compared on the (R/G, B/G) plane; channel maxima reveal the
camera's ISO-dependent saturation levels as distinct peaks.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import EmptyInput, ZeroGreen
from .imageio import DatasetManifest, LinearImage
from .metrics import Chromaticity


@dataclass(frozen=True)
class ChromaticityPoint:
    """Position on the (R/G, B/G) chromaticity plane."""

    rg: float
    bg: float


def chromaticity_point(c: Chromaticity) -> ChromaticityPoint:
    if c.g <= 0:
        raise ZeroGreen(f"green component must be strictly positive, got {c.g}")
    return ChromaticityPoint(rg=c.r / c.g, bg=c.b / c.g)


def scatter_export(manifest: DatasetManifest, which: str = "dominant") -> list[tuple[str, float, float]]:
    """One (path, R/G, B/G) row per manifest record, order preserved."""
    if which not in ("left", "right", "dominant"):
        raise ValueError(f"which must be left, right or dominant, got {which!r}")
    rows = []
    for rec in manifest:
        c = {"left": rec.gt.left, "right": rec.gt.right, "dominant": rec.gt.dominant}[which]
        try:
            pt = chromaticity_point(c)
        except ZeroGreen as exc:
            raise ZeroGreen(f"{rec.image_path}: {exc}") from None
        rows.append((rec.image_path, pt.rg, pt.bg))
    return rows


def max_histogram(images: Iterable[LinearImage], bin_width: float = 100.0) -> dict[float, int]:
    """Histogram of per-image per-channel maxima (3 entries per image).

    Keys are lower bin edges (floor(v / bin_width) * bin_width); the counts
    always sum to 3x the image count.
    """
    if bin_width <= 0:
        raise ValueError(f"bin width must be positive, got {bin_width}")
    bins: dict[float, int] = {}
    n = 0
    for img in images:
        n += 1
        for ch in range(3):
            v = float(img.data[:, :, ch].max())
            lo = math.floor(v / bin_width) * bin_width
            bins[lo] = bins.get(lo, 0) + 1
    if n == 0:
        raise EmptyInput("max_histogram needs at least one image")
    return dict(sorted(bins.items()))


def saturation_clusters(maxima: Sequence[float], tolerance: float = 64.0) -> list[tuple[float, int]]:
    """Group values by single-linkage over sorted input.

    A value joins the current cluster while it stays within ``tolerance`` of
    the cluster's running mean; clusters come back sorted by center, with
    centers equal to the mean of their members.
    """
    if len(maxima) == 0:
        raise EmptyInput("saturation_clusters needs at least one value")
    if tolerance <= 0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")
    vals = sorted(float(v) for v in maxima)
    clusters: list[tuple[float, int]] = []
    total = 0.0
    count = 0
    for v in vals:
        if count and abs(v - total / count) > tolerance:
            clusters.append((total / count, count))
            total, count = 0.0, 0
        total += v
        count += 1
    clusters.append((total / count, count))
    return clusters


# --- CSV emitters (plot-ready) ----------------------------------------------

def write_scatter_csv(rows: list[tuple[str, float, float]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "rg", "bg"])
        for p, rg, bg in rows:
            writer.writerow([p, repr(rg), repr(bg)])


def write_maxhist_csv(hist: dict[float, int], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "count"])
        for lo, count in sorted(hist.items()):
            writer.writerow([f"{lo:g}", count])


def write_clusters_csv(clusters: list[tuple[float, int]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["center", "count"])
        for center, count in clusters:
            writer.writerow([repr(center), count])
