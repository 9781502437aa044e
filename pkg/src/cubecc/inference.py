"""Whole-image illuminant prediction and dataset evaluation.

``predict_image`` mirrors the validation protocol: crop the ROI, sample
k random 1536-pixel patches, downscale each to 64x64x3, and run the network.
With k > 1 the per-head outputs aggregate by component-wise median (lower
middle for even k).  ``evaluate`` scores any estimator against the dominant
ground-truth edge of every manifest record.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import MissingSaturation
from .imageio import (
    DatasetManifest,
    LinearImage,
    apply_roi,
    make_image_loader,
    resolve_saturation,
)
from .metrics import Chromaticity, ErrorStats, aggregate, reproduction_error
from .nncore import LayerStack, normalize_head
from .patches import TARGET_SIZE, downscale_local_mean, sample_patch_specs

VAL_PATCH_SIDE = 1536
DEFAULT_ROI_X = 1900

Estimator = Callable[[LinearImage], Chromaticity]


@dataclass(frozen=True)
class Prediction:
    """Normalized triplet per head: the answer plus both cube edges."""

    answer: Chromaticity
    left: Chromaticity
    right: Chromaticity


def _lower_median(values: np.ndarray) -> np.ndarray:
    """Component-wise lower-middle median along axis 0."""
    srt = np.sort(values, axis=0)
    return srt[(values.shape[0] - 1) // 2]


def predict_image(model: LayerStack, image: LinearImage, k_patches: int = 1,
                  seed: int = 0, patch_side: int = VAL_PATCH_SIDE,
                  roi_x: int = DEFAULT_ROI_X) -> Prediction:
    """Predict the illuminant from k random patches of one image."""
    if k_patches < 1:
        raise ValueError("k_patches must be >= 1")
    if image.saturation is None:
        raise MissingSaturation("predict_image needs image.saturation")
    image = apply_roi(image, min(roi_x, image.width))
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    specs = sample_patch_specs(image.width, image.height, k_patches,
                               [patch_side], rng)
    dtype = next(iter(model.params().values())).dtype
    outputs = np.empty((k_patches, 9))
    for i, spec in enumerate(specs):
        crop = image.data[spec.y:spec.y + spec.side, spec.x:spec.x + spec.side, :]
        small = downscale_local_mean(crop, spec.side // TARGET_SIZE)
        patch = (small / image.saturation).astype(dtype)
        outputs[i] = model.forward(patch)
    med = _lower_median(outputs)
    triplets = [normalize_head(med[3 * h:3 * h + 3]) for h in range(3)]
    return Prediction(answer=Chromaticity(*triplets[0]),
                      left=Chromaticity(*triplets[1]),
                      right=Chromaticity(*triplets[2]))


def model_estimator(model: LayerStack, k_patches: int = 1, seed: int = 0,
                    patch_side: int = VAL_PATCH_SIDE, roi_x: int = DEFAULT_ROI_X) -> Estimator:
    """Wrap a trained model as an evaluate()-compatible estimator."""
    def estimate(image: LinearImage) -> Chromaticity:
        return predict_image(model, image, k_patches=k_patches, seed=seed,
                             patch_side=patch_side, roi_x=roi_x).answer
    return estimate


@dataclass(frozen=True)
class EvalRow:
    path: str
    error_deg: float
    estimate: Chromaticity
    gt: Chromaticity
    sat_source: str


def evaluate(manifest: DatasetManifest, images, estimator: Estimator) -> tuple[ErrorStats, list[EvalRow]]:
    """Score an estimator against the dominant ground truth of every record.

    ``images`` may be a directory, a mapping, or a loader callable.  Returns
    aggregate statistics plus one row per image (manifest order); each row
    records how the image's saturation level was resolved.
    """
    loader = make_image_loader(images)
    rows: list[EvalRow] = []
    for rec in manifest:
        image, sat_source = resolve_saturation(loader(rec.image_path), rec.iso)
        estimate = estimator(image)
        err = reproduction_error(rec.gt.dominant, estimate)
        rows.append(EvalRow(path=rec.image_path, error_deg=err,
                            estimate=estimate, gt=rec.gt.dominant,
                            sat_source=sat_source))
    stats = aggregate([row.error_deg for row in rows])
    return stats, rows


def write_report_csv(rows: list[EvalRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "error_deg", "est_r", "est_g", "est_b",
                         "gt_r", "gt_g", "gt_b", "sat_source"])
        for row in rows:
            writer.writerow([row.path, repr(row.error_deg),
                             repr(row.estimate.r), repr(row.estimate.g), repr(row.estimate.b),
                             repr(row.gt.r), repr(row.gt.g), repr(row.gt.b),
                             row.sat_source])


def summary_json(stats: ErrorStats) -> str:
    return json.dumps({
        "median_deg": stats.median,
        "mean_deg": stats.mean,
        "trimean_deg": stats.trimean,
        "best25_deg": stats.best25_mean,
        "worst25_deg": stats.worst25_mean,
        "count": stats.count,
    }, indent=2)
