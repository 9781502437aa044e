"""Reproduction angular error and its aggregation statistics.

The error between a ground-truth illuminant ``t`` and an estimate ``p`` is the
angle between the element-wise quotient ``p / t`` and the achromatic direction
``(1, 1, 1)``, reported in degrees.  It is invariant under positive rescaling
of either argument and is *not* symmetric in its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DegenerateEstimate, DegenerateGroundTruth, EmptyInput

_SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class Chromaticity:
    """Illuminant color as three nonnegative linear-RGB components.

    Only the direction matters; :meth:`canonical` rescales to unit component
    sum.
    """

    r: float
    g: float
    b: float

    def __post_init__(self):
        comps = (self.r, self.g, self.b)
        if any(not math.isfinite(c) for c in comps):
            raise ValueError(f"chromaticity components must be finite, got {comps}")
        if any(c < 0 for c in comps):
            raise ValueError(f"chromaticity components must be >= 0, got {comps}")
        if all(c == 0 for c in comps):
            raise ValueError("chromaticity must have at least one positive component")

    def canonical(self) -> "Chromaticity":
        """Rescale so the components sum to 1 (idempotent)."""
        s = self.r + self.g + self.b
        if s == 1.0:
            return self
        return Chromaticity(self.r / s, self.g / s, self.b / s)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.r, self.g, self.b)


def _components(c) -> tuple[float, float, float]:
    """Accept a Chromaticity or any 3-sequence of reals."""
    if isinstance(c, Chromaticity):
        return c.as_tuple()
    vals = tuple(float(v) for v in c)
    if len(vals) != 3:
        raise ValueError(f"expected 3 components, got {len(vals)}")
    return vals


def reproduction_error(t, p) -> float:
    """Angle in degrees between ``p / t`` and the achromatic axis.

    ``t`` must be strictly positive component-wise (it divides), ``p`` must be
    nonzero.  Result lies in [0, 180]; the arccos argument is clamped to
    [-1, 1] to absorb floating-point rounding.
    """
    tr, tg, tb = _components(t)
    pr, pg, pb = _components(p)
    if tr <= 0 or tg <= 0 or tb <= 0:
        raise DegenerateGroundTruth(f"ground truth must be strictly positive, got {(tr, tg, tb)}")
    if pr == 0 and pg == 0 and pb == 0:
        raise DegenerateEstimate("estimate is the zero vector")
    q0, q1, q2 = pr / tr, pg / tg, pb / tb
    num = q0 + q1 + q2
    den = math.sqrt(q0 * q0 + q1 * q1 + q2 * q2) * _SQRT3
    cosine = num / den
    cosine = max(-1.0, min(1.0, cosine))
    return math.degrees(math.acos(cosine))


@dataclass(frozen=True)
class ErrorStats:
    """Summary statistics over a set of angular errors, all in degrees."""

    mean: float
    median: float
    trimean: float
    best25_mean: float
    worst25_mean: float
    count: int


def aggregate(errors: Iterable[float] | Sequence[float]) -> ErrorStats:
    """Summarize a non-empty list of angular errors.

    The median of an even-length list is the lower middle element (a
    deterministic tie rule; no interpolation).  Quartile means average the
    ceil(n/4) smallest / largest elements.  The trimean combines the lower
    order-statistic quartiles as (q1 + 2*median + q3) / 4.
    """
    vals = [float(e) for e in errors]
    if not vals:
        raise EmptyInput("cannot aggregate an empty error list")
    if any(not math.isfinite(v) or v < 0 for v in vals):
        raise ValueError("errors must be finite and nonnegative")
    vals.sort()
    n = len(vals)
    mean = sum(vals) / n
    median = vals[(n - 1) // 2]
    q1 = vals[(n - 1) // 4]
    q3 = vals[(3 * (n - 1)) // 4]
    trimean = (q1 + 2.0 * median + q3) / 4.0
    k = -(-n // 4)  # ceil(n/4)
    best = sum(vals[:k]) / k
    worst = sum(vals[-k:]) / k
    # Basic sanity on the subset means; tiny slack absorbs float rounding.
    slack = 1e-9 * max(1.0, worst)
    if not (best <= mean + slack and mean <= worst + slack):
        raise AssertionError("quartile means must bracket the mean")
    return ErrorStats(mean=mean, median=median, trimean=trimean,
                      best25_mean=best, worst25_mean=worst, count=n)
