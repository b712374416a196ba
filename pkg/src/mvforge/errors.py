"""Exception types shared across the package.

Every error that callers are expected to catch lives here so the CLI can map
them onto exit codes in one place.
"""

from __future__ import annotations


class ForgeError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateProjection(ForgeError):
    """Projection denominator is (numerically) zero: the point sits on the
    camera's principal plane and has no well-defined image coordinates."""


class RayParallelToPlane(ForgeError):
    """Back-projection ray never meets the requested horizontal plane."""


class InvalidRing(ForgeError):
    """Camera ring parameters are unusable (non-positive radius, empty ring,
    or a pitch that leaves the bearing toward the ring centre undefined)."""


class PlacementInfeasible(ForgeError):
    """Rejection sampling ran out of retries before placing every person."""


class DuplicateId(ForgeError):
    """Two partition areas claim the same person id."""


class ShapeMismatch(ForgeError):
    """Map stacks or attention tensors disagree in shape or cardinality."""


class InvalidProblem(ForgeError):
    """Transport problem inputs are malformed (NaNs, negative mass, empty
    sides, or a plan too large to materialise)."""


class UndefinedMetric(ForgeError):
    """A metric's denominator is zero so the value does not exist."""


class FormatError(ForgeError):
    """A file on disk does not match the expected format.

    Carries the offending path, the byte offset at which parsing failed and
    a short description of what was expected there.
    """

    def __init__(self, file: str, offset: int, expected: str):
        self.file = str(file)
        self.offset = int(offset)
        self.expected = expected
        super().__init__(f"{self.file}: offset {self.offset}: expected {expected}")
