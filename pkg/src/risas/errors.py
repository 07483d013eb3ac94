"""Exception types raised across the pipeline."""


class RisasError(Exception):
    """Base class for all library errors."""


class InvalidDepthError(RisasError):
    """A depth value required to be positive was zero or negative."""


class OutOfBoundsError(RisasError):
    """A pixel coordinate fell outside the image bounds."""


class DegenerateDirectionError(RisasError):
    """A 3-D direction is parallel to the optical axis and has no image-plane direction."""


class DimensionMismatchError(RisasError):
    """Two arrays or an array and its declared intrinsics disagree in shape."""


class EmptyFrameError(RisasError):
    """An operation needing at least one valid pixel received none."""


class TooFewPointsError(RisasError):
    """A support region retained too few 3-D points to build a descriptor."""


class EmptySceneError(RisasError):
    """No primitive of a synthetic scene is visible from the camera."""


class UnsupportedBitDepthError(RisasError):
    """An image file does not use the bit depth the loader requires."""
