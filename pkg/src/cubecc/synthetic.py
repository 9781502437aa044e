"""Synthetic desk-scale scenes for demos and self-contained evaluation.

Each scene is a piecewise-constant mosaic of reflectance blocks drawn from a
fixed palette, lit by one illuminant from a two-cluster (warm/cool)
chromaticity mixture with per-channel log-normal jitter.  The palette mean is
deliberately tinted away from gray, so gray-world carries a systematic bias a
learned estimator can remove.  Scenes are clip-free by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imageio import (
    DatasetManifest,
    GroundTruth,
    LinearImage,
    ManifestRecord,
    resolve_saturation,
    write_manifest,
    write_ppm16,
)
from .metrics import Chromaticity

# reflectance palette: modest chroma around a deliberately tinted mean
_PALETTE_BASE = np.array([
    [1.20, 0.95, 0.90],
    [0.85, 1.10, 1.00],
    [1.05, 1.05, 0.80],
    [0.90, 0.95, 1.20],
    [1.10, 0.85, 1.05],
    [0.95, 1.15, 0.90],
    [1.00, 1.00, 1.00],
    [0.80, 0.95, 1.15],
])
_PALETTE_TINT = np.array([1.09, 1.00, 0.91])

WARM_CENTER = (0.44, 0.36, 0.20)
COOL_CENTER = (0.21, 0.34, 0.45)


@dataclass(frozen=True)
class SceneConfig:
    size: int = 192
    block_min: int = 24
    block_max: int = 48
    jitter_sigma: float = 0.07
    peak: float = 6000.0
    saturation_iso: int = 200  # table value 15306
    seed: int = 0


def _mosaic(rng: np.random.Generator, size: int, block_min: int, block_max: int) -> np.ndarray:
    """Random piecewise-constant reflectance raster (size x size x 3)."""
    palette = _PALETTE_BASE * _PALETTE_TINT
    out = np.empty((size, size, 3))
    y = 0
    while y < size:
        bh = int(rng.integers(block_min, block_max + 1))
        x = 0
        while x < size:
            bw = int(rng.integers(block_min, block_max + 1))
            color = palette[int(rng.integers(len(palette)))]
            brightness = rng.uniform(0.45, 1.0)
            out[y:y + bh, x:x + bw, :] = color * brightness
            x += bw
        y += bh
    return out


def _illuminant(rng: np.random.Generator, warm: bool, jitter_sigma: float) -> np.ndarray:
    center = np.array(WARM_CENTER if warm else COOL_CENTER)
    return center * np.exp(rng.normal(0.0, jitter_sigma, size=3))


def generate_scene(rng: np.random.Generator, warm: bool,
                   config: SceneConfig = SceneConfig()) -> tuple[LinearImage, Chromaticity]:
    """One clip-free scene plus its ground-truth illuminant."""
    reflectance = _mosaic(rng, config.size, config.block_min, config.block_max)
    illum = _illuminant(rng, warm, config.jitter_sigma)
    raw = reflectance * illum
    scale = config.peak / raw.max()
    image = LinearImage(data=raw * scale)
    image, _ = resolve_saturation(image, config.saturation_iso)
    return image, Chromaticity(*illum).canonical()


def generate_dataset(n_scenes: int, config: SceneConfig = SceneConfig()
                     ) -> tuple[DatasetManifest, dict[str, LinearImage]]:
    """Alternating warm/cool scenes; both cube edges carry the same truth.

    Returns the manifest plus an in-memory path -> image mapping usable
    anywhere a loader is accepted.
    """
    ss = np.random.SeedSequence(config.seed)
    records = []
    images: dict[str, LinearImage] = {}
    for idx, child in enumerate(ss.spawn(n_scenes)):
        rng = np.random.Generator(np.random.PCG64(child))
        image, illum = generate_scene(rng, warm=(idx % 2 == 0), config=config)
        name = f"scene_{idx:04d}.ppm"
        images[name] = image
        records.append(ManifestRecord(
            image_path=name,
            gt=GroundTruth(left=illum, right=illum, dominant_side="left"),
            iso=config.saturation_iso,
        ))
    return DatasetManifest(records=tuple(records)), images


def write_dataset(manifest: DatasetManifest, images: dict[str, LinearImage],
                  out_dir) -> None:
    """Materialize a generated dataset as PPM files plus manifest.csv."""
    from pathlib import Path
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, image in images.items():
        write_ppm16(image, out / name)
    write_manifest(manifest, out / "manifest.csv")
