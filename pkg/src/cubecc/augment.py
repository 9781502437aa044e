"""Saturation-aware element-wise color augmentation.

Multiplying every pixel and the ground-truth triplets by one per-channel gain
vector simulates a different light source.  Brightening clipped pixels is
harmless (they stay clipped), but darkening them manufactures an impossible
histogram: the clipped edge detaches from the image maximum.  The
``saturation_policy`` decides what happens when a gain component below 1 meets
an image that has clipped pixels.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    MissingSaturation,
    RejectionBudgetExhausted,
    Skipped,
    UnnaturalDarkening,
)
from .imageio import (
    DatasetManifest,
    GroundTruth,
    LinearImage,
    ManifestRecord,
    clip_mask,
    read_ppm16,
    resolve_saturation,
    write_manifest,
    write_ppm16,
)
from .metrics import Chromaticity, reproduction_error

logger = logging.getLogger(__name__)

POLICIES = ("reject", "clamp", "skip_saturated_images")

_REJECTION_BUDGET = 1000


@dataclass(frozen=True)
class GainVector:
    """Strictly positive per-channel multipliers."""

    gr: float
    gg: float
    gb: float

    def __post_init__(self):
        for v in (self.gr, self.gg, self.gb):
            if not (v > 0) or not math.isfinite(v):
                raise ValueError(f"gain components must be positive and finite, got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.gr, self.gg, self.gb], dtype=np.float64)


@dataclass(frozen=True)
class AugmentConfig:
    gain_min: float = 0.8
    gain_max: float = 1.25
    max_chroma_shift_deg: float = 10.0
    saturation_policy: str = "skip_saturated_images"
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.gain_min <= self.gain_max):
            raise ValueError(
                f"need 0 < gain_min <= gain_max, got [{self.gain_min}, {self.gain_max}]")
        if self.max_chroma_shift_deg < 0:
            raise ValueError("max_chroma_shift_deg must be >= 0")
        if self.saturation_policy not in POLICIES:
            raise ValueError(f"saturation_policy must be one of {POLICIES}")


def _scale_chromaticity(c: Chromaticity, gain: GainVector) -> Chromaticity:
    return Chromaticity(c.r * gain.gr, c.g * gain.gg, c.b * gain.gb)


def apply_gain(image: LinearImage, gt: GroundTruth, gain: GainVector,
               policy: str = "skip_saturated_images") -> tuple[LinearImage, GroundTruth]:
    """Scale image and ground truth element-wise by the gain vector.

    Non-clipped values scale exactly and are then clamped to the saturation
    level.  When any gain component is below 1 and the image contains clipped
    pixels, the policy applies: ``reject`` raises UnnaturalDarkening, ``clamp``
    scales and re-pins previously clipped channels to exactly the saturation
    level, ``skip_saturated_images`` raises Skipped.
    """
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}")
    if image.saturation is None:
        raise MissingSaturation("apply_gain needs image.saturation")
    g = gain.as_array()
    darkens = bool((g < 1.0).any())
    mask = clip_mask(image)
    has_clipped = bool(mask.any())
    if darkens and has_clipped:
        if policy == "reject":
            raise UnnaturalDarkening(
                "gain below 1 would darken clipped pixels; rejected by policy")
        if policy == "skip_saturated_images":
            raise Skipped("image has clipped pixels and the gain darkens; skipped by policy")
    if (g == 1.0).all():
        # exact identity, bit for bit
        new_data = image.data.copy()
    else:
        new_data = np.minimum(image.data * g, image.saturation)
        if darkens and has_clipped:  # policy == "clamp"
            new_data[mask] = image.saturation
    new_gt = GroundTruth(
        left=_scale_chromaticity(gt.left, gain),
        right=_scale_chromaticity(gt.right, gain),
        dominant_side=gt.dominant_side,
    )
    return dataclasses.replace(image, data=new_data), new_gt


def chroma_shift_deg(gt_dominant: Chromaticity, gain: GainVector) -> float:
    """Angular shift a gain inflicts on a ground-truth chromaticity."""
    return reproduction_error(gt_dominant, _scale_chromaticity(gt_dominant, gain))


def sample_gain(config: AugmentConfig, rng: np.random.Generator,
                gt_dominant: Chromaticity | None = None) -> GainVector:
    """Draw a gain with log-uniform components in [gain_min, gain_max].

    When a ground truth is supplied, the draw is rejected and retried (up to
    1000 times) until the induced chroma shift stays within
    ``max_chroma_shift_deg``.
    """
    lo = math.log(config.gain_min)
    hi = math.log(config.gain_max)
    for _ in range(_REJECTION_BUDGET):
        comps = np.exp(rng.uniform(lo, hi, size=3))
        gain = GainVector(float(comps[0]), float(comps[1]), float(comps[2]))
        if gt_dominant is None:
            return gain
        if chroma_shift_deg(gt_dominant, gain) <= config.max_chroma_shift_deg:
            return gain
    raise RejectionBudgetExhausted(
        f"no gain within {config.max_chroma_shift_deg} deg after {_REJECTION_BUDGET} tries")


def augment_manifest(manifest: DatasetManifest, images_dir, out_dir,
                     per_image: int, config: AugmentConfig) -> tuple[DatasetManifest, list[str]]:
    """Write gained copies of every manifest image plus the combined manifest.

    Original rows are kept verbatim; each augmented copy gets a new PPM in
    ``out_dir`` and a row with the scaled ground truth.  Returns the combined
    manifest and the list of skipped source paths.  Per-image RNG streams are
    derived from (seed, image index) so results do not depend on ordering.
    """
    images_dir = Path(images_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    children = np.random.SeedSequence(config.seed).spawn(len(manifest))
    new_records = list(manifest.records)
    skipped: list[str] = []
    for idx, rec in enumerate(manifest):
        if per_image <= 0:
            break
        rng = np.random.Generator(np.random.PCG64(children[idx]))
        image = read_ppm16(images_dir / rec.image_path)
        image, _ = resolve_saturation(image, rec.iso)
        stem = Path(rec.image_path).stem
        for k in range(per_image):
            gain = sample_gain(config, rng, rec.gt.dominant)
            try:
                aug_img, aug_gt = apply_gain(image, rec.gt, gain,
                                             policy=config.saturation_policy)
            except Skipped as exc:
                # reject policy raises UnnaturalDarkening and aborts the run
                logger.warning("skipping %s (copy %d): %s", rec.image_path, k, exc)
                skipped.append(rec.image_path)
                continue
            name = f"{stem}_aug{k}.ppm"
            write_ppm16(aug_img, out_dir / name)
            new_records.append(ManifestRecord(image_path=name, gt=aug_gt, iso=rec.iso))
    combined = DatasetManifest(records=tuple(new_records))
    write_manifest(combined, out_dir / "manifest.csv")
    return combined, skipped
