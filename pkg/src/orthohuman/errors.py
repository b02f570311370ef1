"""Exception types shared across the package."""


class OrthoHumanError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(OrthoHumanError):
    """Inputs that must share a shape do not."""


class ShapeError(OrthoHumanError):
    """Input spatial size incompatible with the network (not divisible by 2^depth)."""


class EmptyRender(OrthoHumanError):
    """No pixel of the target image was hit by the mesh."""


class MaskMismatch(OrthoHumanError):
    """Front/back foreground masks differ where they must be identical."""


class OrderViolation(OrthoHumanError):
    """Back depth is smaller than front depth at some foreground pixel."""


class NoSurface(OrthoHumanError):
    """The volume contains no sign change, so no iso-surface exists."""


class EmptyMesh(OrthoHumanError):
    """A mesh with no faces where a nonempty one is required."""


class EmptyOverlap(OrthoHumanError):
    """Two masks share no foreground pixel."""


class ExtractorUnavailable(OrthoHumanError):
    """Requested pretrained feature extractor cannot be constructed."""


class BadImage(OrthoHumanError):
    """Input image file missing or undecodable."""


class DatasetEmpty(OrthoHumanError):
    """Training requested on an empty manifest."""


class CheckpointIOError(OrthoHumanError):
    """Checkpoint file unreadable, unwritable, or of the wrong format."""
