"""Random patch sampling, exact local-mean downscaling, and the ``.ccpt``
on-disk tensor format.

Patch sides are multiples of 64 (768 = 64*12, 1152 = 64*18, 1536 = 64*24 in
the reference pipeline); each square crop is block-averaged down to 64x64x3
and divided by the image's saturation level so the network always sees values
in [0, 1].  The 9-value target is the dominant, left, and right ground-truth
triplets, each normalized to unit sum.

``.ccpt`` layout (all little-endian): magic ``CCPT``, u32 version, u64 record
count, then per record 64*64*3 + 9 float32 values.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateSaturation,
    MagicMismatch,
    NonDivisibleFactor,
    PatchLargerThanImage,
    TruncatedFile,
)
from .imageio import (
    DatasetManifest,
    LinearImage,
    apply_roi,
    make_image_loader,
    resolve_saturation,
)
from .metrics import Chromaticity

logger = logging.getLogger(__name__)

TARGET_SIZE = 64

CCPT_MAGIC = b"CCPT"
CCPT_VERSION = 1
_RECORD_FLOATS = TARGET_SIZE * TARGET_SIZE * 3 + 9


@dataclass(frozen=True)
class PatchSpec:
    """Square crop: top-left corner plus side length in source pixels."""

    x: int
    y: int
    side: int

    def __post_init__(self):
        if self.x < 0 or self.y < 0 or self.side < 1:
            raise ValueError(f"invalid patch spec {self}")


@dataclass
class PatchTensor:
    """One 64x64x3 training sample with its 9-value target.

    ``source_path`` and ``spec`` describe provenance and are not serialized.
    """

    data: np.ndarray
    target: np.ndarray
    source_path: str | None = None
    spec: PatchSpec | None = None


def downscale_local_mean(block: np.ndarray, factor: int) -> np.ndarray:
    """Average non-overlapping factor x factor tiles, per channel.

    Exact block means: mass is conserved (sum(out) * factor^2 == sum(in)).
    """
    block = np.asarray(block)
    if factor < 1:
        raise NonDivisibleFactor(f"factor must be >= 1, got {factor}")
    h, w = block.shape[0], block.shape[1]
    if h % factor or w % factor:
        raise NonDivisibleFactor(f"factor {factor} does not divide block shape {h}x{w}")
    rest = block.shape[2:]
    view = block.reshape(h // factor, factor, w // factor, factor, *rest)
    return view.mean(axis=(1, 3))


def sample_patch_specs(image_w: int, image_h: int, count: int,
                       sides: Sequence[int], rng: np.random.Generator) -> list[PatchSpec]:
    """Draw ``count`` random placements; side uniform over ``sides``, position
    uniform over valid top-left corners."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if not sides:
        raise ValueError("sides must be non-empty")
    limit = min(image_w, image_h)
    for side in sides:
        if side > limit:
            raise PatchLargerThanImage(
                f"side {side} does not fit a {image_w}x{image_h} image")
    sides = list(sides)
    specs = []
    for _ in range(count):
        side = sides[int(rng.integers(len(sides)))]
        x = int(rng.integers(image_w - side + 1))
        y = int(rng.integers(image_h - side + 1))
        specs.append(PatchSpec(x=x, y=y, side=side))
    return specs


def _unit_sum(c: Chromaticity) -> np.ndarray:
    cc = c.canonical()
    return np.array([cc.r, cc.g, cc.b], dtype=np.float64)


def _target_vector(gt) -> np.ndarray:
    """(dominant, left, right), each triplet normalized to unit sum."""
    return np.concatenate([_unit_sum(gt.dominant), _unit_sum(gt.left),
                           _unit_sum(gt.right)]).astype(np.float32)


def _cut_patch(image: LinearImage, spec: PatchSpec, target: np.ndarray,
               source_path: str) -> PatchTensor:
    if spec.side % TARGET_SIZE:
        raise NonDivisibleFactor(
            f"patch side {spec.side} is not a multiple of {TARGET_SIZE}")
    if image.saturation is None or image.saturation <= 0:
        raise DegenerateSaturation(
            f"cannot normalize by saturation {image.saturation}")
    crop = image.data[spec.y:spec.y + spec.side, spec.x:spec.x + spec.side, :]
    small = downscale_local_mean(crop, spec.side // TARGET_SIZE)
    data = (small / image.saturation).astype(np.float32)
    return PatchTensor(data=data, target=target, source_path=source_path, spec=spec)


def _prepare(image: LinearImage, iso: int, roi_x: int) -> LinearImage:
    image, _ = resolve_saturation(image, iso)
    return apply_roi(image, min(roi_x, image.width))


def _usable_sides(sides: Sequence[int], image: LinearImage, path: str) -> list[int]:
    limit = min(image.width, image.height)
    usable = [s for s in sides if s <= limit]
    if not usable:
        raise PatchLargerThanImage(
            f"{path}: no side from {tuple(sides)} fits {image.width}x{image.height}")
    if len(usable) < len(sides):
        logger.warning("%s: sides %s do not fit %dx%d, falling back to %s",
                       path, [s for s in sides if s > limit],
                       image.width, image.height, usable)
    return usable


@dataclass(frozen=True)
class ExtractConfig:
    count: int = 100
    sides: tuple[int, ...] = (768, 1152, 1536)
    roi_x: int = 1900
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.roi_x < 1:
            raise ValueError("roi_x must be >= 1")
        if not self.sides or any(s < TARGET_SIZE or s % TARGET_SIZE for s in self.sides):
            raise NonDivisibleFactor(
                f"every side must be a positive multiple of {TARGET_SIZE}, got {self.sides}")


def extract_training_set(manifest: DatasetManifest, images,
                         config: ExtractConfig) -> list[PatchTensor]:
    """Sample ``config.count`` random patches from each manifest image.

    Images whose ROI cannot host every configured side fall back to the sides
    that fit (logged).  Fully deterministic: per-image RNG streams derive from
    (seed, image index).
    """
    loader = make_image_loader(images)
    children = np.random.SeedSequence(config.seed).spawn(len(manifest))
    out: list[PatchTensor] = []
    for idx, rec in enumerate(manifest):
        image = _prepare(loader(rec.image_path), rec.iso, config.roi_x)
        sides = _usable_sides(config.sides, image, rec.image_path)
        rng = np.random.Generator(np.random.PCG64(children[idx]))
        target = _target_vector(rec.gt)
        for spec in sample_patch_specs(image.width, image.height,
                                       config.count, sides, rng):
            out.append(_cut_patch(image, spec, target, rec.image_path))
    return out


def extract_validation_set(manifest: DatasetManifest, images, seed: int,
                           side: int = 1536, roi_x: int = 1900) -> list[PatchTensor]:
    """One random patch per image (side 1536, i.e. factor 24, by default)."""
    cfg = ExtractConfig(count=1, sides=(side,), roi_x=roi_x, seed=seed)
    return extract_training_set(manifest, images, cfg)


def stack_patches(patches: Sequence[PatchTensor]) -> tuple[np.ndarray, np.ndarray]:
    """Stack into (N,64,64,3) data and (N,9) target arrays (float32)."""
    if not patches:
        return (np.zeros((0, TARGET_SIZE, TARGET_SIZE, 3), np.float32),
                np.zeros((0, 9), np.float32))
    x = np.stack([p.data for p in patches]).astype(np.float32)
    y = np.stack([p.target for p in patches]).astype(np.float32)
    return x, y


# --- .ccpt files --------------------------------------------------------------

def tensor_file_write(path, patches: Sequence[PatchTensor]) -> None:
    with open(path, "wb") as fh:
        fh.write(CCPT_MAGIC)
        fh.write(struct.pack("<IQ", CCPT_VERSION, len(patches)))
        for p in patches:
            data = np.ascontiguousarray(p.data, dtype="<f4")
            target = np.ascontiguousarray(p.target, dtype="<f4")
            if data.shape != (TARGET_SIZE, TARGET_SIZE, 3) or target.shape != (9,):
                raise ValueError(
                    f"patch tensors must be {TARGET_SIZE}x{TARGET_SIZE}x3 with 9 targets, "
                    f"got {data.shape} / {target.shape}")
            fh.write(data.tobytes())
            fh.write(target.tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) < n:
        raise TruncatedFile(f"unexpected end of file while reading {what}")
    return buf


def tensor_file_read(path) -> list[PatchTensor]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CCPT_MAGIC:
            raise MagicMismatch(f"expected {CCPT_MAGIC!r}, got {magic!r}")
        version, count = struct.unpack("<IQ", _read_exact(fh, 12, "header"))
        if version != CCPT_VERSION:
            raise ValueError(f"unsupported .ccpt version {version}")
        patches = []
        for i in range(count):
            buf = _read_exact(fh, _RECORD_FLOATS * 4, f"record {i}")
            vals = np.frombuffer(buf, dtype="<f4")
            data = vals[:-9].reshape(TARGET_SIZE, TARGET_SIZE, 3).copy()
            target = vals[-9:].copy()
            patches.append(PatchTensor(data=data, target=target))
    return patches
