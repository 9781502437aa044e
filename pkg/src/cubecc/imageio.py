"""16-bit linear image I/O, dataset manifests, and the ISO -> saturation model.

Rasters travel as binary PPM (``P6``), maxval 65535 with big-endian samples
(maxval 255 accepted for small fixtures, values used as-is).  Sample values
are kept in their native 0..65535 range; nothing is rescaled on load.

The manifest is a UTF-8 CSV with the exact header
``path,lr,lg,lb,rr,rg,rb,dominant,iso``: one row per image with the left-edge
and right-edge ground-truth triplets, which edge dominates, and the ISO the
frame was shot at.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateSaturation,
    MalformedHeader,
    MissingSaturation,
    NonPositiveGroundTruth,
    OutOfRangeSample,
    ParseError,
    RoiOutOfBounds,
    TruncatedPayload,
    UnknownIso,
    UnsupportedMaxval,
)
from .metrics import Chromaticity

# Canon 550D saturation level by ISO speed (14 ISO values total).
SATURATION_BY_ISO: dict[int, float] = {
    160: 12652.0, 320: 12652.0, 640: 12652.0, 1250: 12652.0,
    100: 13584.0, 125: 13584.0,
    200: 15306.0, 250: 15306.0, 400: 15306.0, 500: 15306.0,
    800: 15306.0, 1000: 15306.0, 1600: 15306.0,
    6400: 15324.0,
}

MANIFEST_HEADER = ["path", "lr", "lg", "lb", "rr", "rg", "rb", "dominant", "iso"]


@dataclass
class LinearImage:
    """H x W x 3 raster of linear sensor counts plus sensor metadata.

    ``saturation`` is the channel value at which the sensor clips; it and
    ``iso`` are attached after decoding (see :func:`attach_metadata`).
    """

    data: np.ndarray
    saturation: float | None = None
    iso: int | None = None

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 3 or d.shape[2] != 3 or d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError(f"image data must be H x W x 3 with H,W >= 1, got {d.shape}")
        if np.any(d < 0):
            raise ValueError("image data must be nonnegative")
        self.data = d
        if self.saturation is not None:
            self._check_saturation(self.saturation)

    def _check_saturation(self, sat: float):
        # sat == 0 is tolerated for all-zero images (the infer fallback on a
        # degenerate frame); the clip rule and patch normalization reject it.
        if sat < 0 or not math.isfinite(sat):
            raise ValueError(f"saturation must be nonnegative and finite, got {sat}")
        if float(self.data.max()) > sat:
            raise ValueError(
                f"image maximum {self.data.max()} exceeds saturation {sat}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class GroundTruth:
    """Both cube-edge illuminant triplets plus which edge dominates."""

    left: Chromaticity
    right: Chromaticity
    dominant_side: str  # "left" or "right"

    def __post_init__(self):
        if self.dominant_side not in ("left", "right"):
            raise ValueError(f"dominant side must be left or right, got {self.dominant_side!r}")

    @property
    def dominant(self) -> Chromaticity:
        return self.left if self.dominant_side == "left" else self.right


@dataclass(frozen=True)
class ManifestRecord:
    image_path: str
    gt: GroundTruth
    iso: int


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[ManifestRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


# --- PPM -------------------------------------------------------------------

def _read_ppm_tokens(raw: bytes, count: int) -> tuple[list[bytes], int]:
    """Read whitespace-separated header tokens, honoring '#' comments.

    Returns the tokens and the offset one byte past the final separator.
    """
    tokens: list[bytes] = []
    i = 0
    n = len(raw)
    while len(tokens) < count:
        while i < n and raw[i:i + 1].isspace():
            i += 1
        if i < n and raw[i] == ord("#"):
            while i < n and raw[i] not in (0x0A, 0x0D):
                i += 1
            continue
        start = i
        while i < n and not raw[i:i + 1].isspace() and raw[i] != ord("#"):
            i += 1
        if i == start:
            raise MalformedHeader("unexpected end of header")
        tokens.append(raw[start:i])
        if len(tokens) == count:
            # exactly one whitespace byte separates the header from the payload
            if i >= n or not raw[i:i + 1].isspace():
                raise MalformedHeader("missing separator after maxval")
            i += 1
    return tokens, i


def read_ppm16(path) -> LinearImage:
    """Decode a binary PPM file; values are kept as written (no rescaling)."""
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P6"):
        got = raw[:2].decode("ascii", "replace")
        raise MalformedHeader(f"expected P6 magic, got {got!r}")
    try:
        tokens, offset = _read_ppm_tokens(raw, 4)
    except MalformedHeader:
        raise
    if tokens[0] != b"P6":
        raise MalformedHeader(f"expected P6 magic, got {tokens[0]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise MalformedHeader(f"non-numeric header field: {exc}") from None
    if width < 1 or height < 1:
        raise MalformedHeader(f"invalid dimensions {width} x {height}")
    if maxval not in (255, 65535):
        raise UnsupportedMaxval(f"maxval must be 255 or 65535, got {maxval}")
    n_samples = width * height * 3
    bytes_per = 2 if maxval == 65535 else 1
    payload = raw[offset:offset + n_samples * bytes_per]
    if len(payload) < n_samples * bytes_per:
        raise TruncatedPayload(
            f"expected {n_samples * bytes_per} payload bytes, got {len(payload)}")
    dtype = ">u2" if maxval == 65535 else np.uint8
    samples = np.frombuffer(payload, dtype=dtype, count=n_samples)
    data = samples.reshape(height, width, 3).astype(np.float64)
    return LinearImage(data=data)


def write_ppm16(image: LinearImage, path) -> None:
    """Write as binary PPM, maxval 65535, samples rounded to nearest integer."""
    d = image.data
    if float(d.min()) < 0 or float(d.max()) > 65535:
        raise OutOfRangeSample(
            f"samples must lie in [0, 65535], got [{d.min()}, {d.max()}]")
    samples = np.rint(d).astype(">u2")
    header = f"P6\n{image.width} {image.height}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + samples.tobytes())


# --- saturation model --------------------------------------------------------

def saturation_for_iso(iso: int) -> float:
    """Table lookup of the sensor saturation level for a known ISO."""
    if iso <= 0:
        raise ValueError(f"iso must be positive, got {iso}")
    try:
        return SATURATION_BY_ISO[int(iso)]
    except KeyError:
        raise UnknownIso(f"no saturation value recorded for ISO {iso}") from None


def infer_saturation(image: LinearImage) -> float:
    """Fallback saturation estimate: the maximum over all channels and pixels."""
    return float(image.data.max())


def attach_metadata(image: LinearImage, *, saturation: float | None = None,
                    iso: int | None = None) -> LinearImage:
    """Return a copy of the image with saturation and/or ISO attached."""
    return dataclasses.replace(
        image,
        saturation=saturation if saturation is not None else image.saturation,
        iso=iso if iso is not None else image.iso,
    )


def resolve_saturation(image: LinearImage, iso: int | None) -> tuple[LinearImage, str]:
    """Attach a saturation level: ISO table first, observed maximum as fallback.

    Returns the updated image and the source of the value ("iso-table" or
    "observed-max") so reports can record how each image was resolved.  The
    fallback also kicks in when the table value lies below the observed
    maximum (the table would contradict the data).
    """
    if iso is not None:
        try:
            sat = saturation_for_iso(iso)
        except UnknownIso:
            sat = None
        if sat is not None and sat >= infer_saturation(image):
            return attach_metadata(image, saturation=sat, iso=iso), "iso-table"
    return attach_metadata(image, saturation=infer_saturation(image), iso=iso), "observed-max"


def make_image_loader(images):
    """Normalize the ways callers hand over images to one callable.

    Accepts a directory (str/Path: paths resolve against it and load as PPM),
    a mapping from manifest path to LinearImage, or an existing callable.
    """
    if callable(images):
        return images
    if isinstance(images, dict):
        return images.__getitem__
    base = Path(images)
    return lambda rel: read_ppm16(base / rel)


def clip_mask(image: LinearImage) -> np.ndarray:
    """Boolean H x W x 3 mask of channel values at or above saturation - 2."""
    if image.saturation is None:
        raise MissingSaturation("clip_mask needs image.saturation")
    if image.saturation <= 2:
        raise DegenerateSaturation(
            f"saturation must exceed 2 for the clip rule, got {image.saturation}")
    return image.data >= (image.saturation - 2)


def apply_roi(image: LinearImage, x_max: int) -> LinearImage:
    """Crop to columns [0, x_max); metadata is preserved."""
    if not (1 <= x_max <= image.width):
        raise RoiOutOfBounds(
            f"x_max must be in [1, {image.width}], got {x_max}")
    return dataclasses.replace(image, data=image.data[:, :x_max, :].copy())


# --- manifest ----------------------------------------------------------------

def _positive_triplet(fields: list[str], line_no: int, which: str) -> Chromaticity:
    try:
        vals = tuple(float(v) for v in fields)
    except ValueError:
        raise ParseError(f"line {line_no}: non-numeric {which} ground truth {fields}") from None
    if any(not math.isfinite(v) for v in vals):
        raise ParseError(f"line {line_no}: non-finite {which} ground truth {vals}")
    if any(v <= 0 for v in vals):
        raise NonPositiveGroundTruth(
            f"line {line_no}: {which} ground truth must be strictly positive, got {vals}")
    return Chromaticity(*vals)


def load_manifest(path) -> DatasetManifest:
    """Parse the dataset manifest CSV; errors carry the offending line number."""
    records: list[ManifestRecord] = []
    seen_paths: set[str] = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("line 1: empty manifest (header row required)") from None
        if header != MANIFEST_HEADER:
            raise ParseError(
                f"line 1: header must be {','.join(MANIFEST_HEADER)}, got {','.join(header)}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 9:
                raise ParseError(f"line {line_no}: expected 9 fields, got {len(row)}")
            img_path = row[0]
            if not img_path:
                raise ParseError(f"line {line_no}: empty image path")
            if img_path in seen_paths:
                raise ParseError(f"line {line_no}: duplicate image path {img_path!r}")
            seen_paths.add(img_path)
            left = _positive_triplet(row[1:4], line_no, "left")
            right = _positive_triplet(row[4:7], line_no, "right")
            dominant = row[7]
            if dominant not in ("left", "right"):
                raise ParseError(
                    f"line {line_no}: dominant must be left or right, got {dominant!r}")
            try:
                iso = int(row[8])
            except ValueError:
                raise ParseError(f"line {line_no}: non-integer iso {row[8]!r}") from None
            if iso <= 0:
                raise ParseError(f"line {line_no}: iso must be positive, got {iso}")
            records.append(ManifestRecord(
                image_path=img_path,
                gt=GroundTruth(left=left, right=right, dominant_side=dominant),
                iso=iso,
            ))
    return DatasetManifest(records=tuple(records))


def write_manifest(manifest: DatasetManifest, path) -> None:
    """Inverse of :func:`load_manifest` (used by the augmentation pipeline)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for rec in manifest:
            gt = rec.gt
            writer.writerow([
                rec.image_path,
                repr(gt.left.r), repr(gt.left.g), repr(gt.left.b),
                repr(gt.right.r), repr(gt.right.g), repr(gt.right.b),
                gt.dominant_side, rec.iso,
            ])
