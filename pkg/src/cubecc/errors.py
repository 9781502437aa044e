"""Exception hierarchy shared across the toolkit.

Everything raised on bad data or bad usage derives from :class:`CubeccError`,
so callers (and the CLI) can catch one base class.
"""


class CubeccError(Exception):
    """Base class for all toolkit errors."""


# --- metrics ---------------------------------------------------------------

class DegenerateGroundTruth(CubeccError):
    """Ground-truth chromaticity has a component <= 0."""


class DegenerateEstimate(CubeccError):
    """Estimated chromaticity is the zero vector."""


class EmptyInput(CubeccError):
    """An aggregation was asked to work on an empty collection."""


# --- imageio ---------------------------------------------------------------

class MalformedHeader(CubeccError):
    """PPM header is not a well-formed binary P6 header."""


class TruncatedPayload(CubeccError):
    """PPM pixel payload is shorter than the header promises."""


class UnsupportedMaxval(CubeccError):
    """PPM maxval other than 255 or 65535."""


class OutOfRangeSample(CubeccError):
    """Sample value outside [0, 65535] on write."""


class UnknownIso(CubeccError):
    """ISO value absent from the camera saturation table."""


class DegenerateSaturation(CubeccError):
    """Saturation level too small for the clip rule (must exceed 2)."""


class MissingSaturation(CubeccError):
    """Operation needs image.saturation but it was never attached."""


class RoiOutOfBounds(CubeccError):
    """Requested ROI column bound falls outside the image."""


class ParseError(CubeccError):
    """Manifest CSV could not be parsed; message carries the line number."""


class NonPositiveGroundTruth(CubeccError):
    """Manifest ground-truth triplet has a component <= 0."""


# --- analysis --------------------------------------------------------------

class ZeroGreen(CubeccError):
    """Chromaticity-plane projection needs a strictly positive green."""


# --- augment ---------------------------------------------------------------

class UnnaturalDarkening(CubeccError):
    """Gain < 1 on an image with clipped pixels under the reject policy."""


class Skipped(CubeccError):
    """Image skipped by the skip_saturated_images policy."""


class RejectionBudgetExhausted(CubeccError):
    """Gain sampler could not satisfy the chroma-shift bound in time."""


# --- patches ---------------------------------------------------------------

class NonDivisibleFactor(CubeccError):
    """Downscale factor does not divide the block side exactly."""


class PatchLargerThanImage(CubeccError):
    """Requested patch side does not fit the (ROI-cropped) image."""


class MagicMismatch(CubeccError):
    """Binary file does not start with the expected magic bytes."""


class TruncatedFile(CubeccError):
    """Binary file ends before its declared content."""


# --- nncore ----------------------------------------------------------------

class ShapeMismatch(CubeccError):
    """Layer input (or parameter) has an incompatible shape."""


class InvalidConfig(CubeccError):
    """Network architecture configuration is not buildable."""


class ArchMismatch(CubeccError):
    """Checkpoint architecture tag differs from the target model."""


# --- train -----------------------------------------------------------------

class NonFiniteInput(CubeccError):
    """Loss input contains NaN or infinity."""


class EmptyBatch(CubeccError):
    """Trimming was asked to operate on an empty batch."""


class AllDropped(CubeccError):
    """Trim fractions would leave no samples in the batch."""


class DivergenceDetected(CubeccError):
    """Training loss became non-finite; model rolled back to last good state."""


class EmptyCandidates(CubeccError):
    """Model selection received no candidates."""


# --- baselines -------------------------------------------------------------

class ZeroChannelMean(CubeccError):
    """Gray-world needs a strictly positive mean in every channel."""
