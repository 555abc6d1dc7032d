"""Exception types shared across the pipeline."""


class PoseLiftError(Exception):
    """Base class for all poselift errors."""


class SkeletonMismatchError(PoseLiftError):
    """Joint counts or skeleton identities do not line up."""


class DegenerateInputError(PoseLiftError):
    """Input geometry is degenerate (coincident joints, zero extent, ...)."""


class EmptyCorpusError(PoseLiftError):
    """An operation that needs poses received none."""


class BehindCameraError(PoseLiftError):
    """A joint fell on or behind the camera plane during projection."""


class OptimizationError(PoseLiftError):
    """The optimizer started from a non-finite objective."""


class PoseFileError(PoseLiftError):
    """A pose file is malformed; the message carries file position context."""
