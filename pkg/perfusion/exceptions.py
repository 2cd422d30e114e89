"""
Error kinds raised by the perfusion toolkit.

Two families map onto the command-line exit codes: input/usage problems
(exit 2) and computation failures (exit 1). Every kind is also a
``ValueError`` so callers outside the toolkit can catch them generically.
"""


class PerfusionError(ValueError):
    """Base class for all toolkit errors."""

    exit_code = 1


class PerfusionInputError(PerfusionError):
    """Bad input data, bad file, or bad parameters supplied by the caller."""

    exit_code = 2


class PerfusionComputationError(PerfusionError):
    """A computation could not produce a valid result."""

    exit_code = 1


# --- volume-model -----------------------------------------------------------

class InvariantViolationError(PerfusionInputError):
    """A value violates a domain type invariant."""


class NonFiniteValueError(InvariantViolationError):
    """NaN or Inf found where only finite values are allowed."""


class VolumeFormatError(PerfusionInputError):
    """An on-disk artifact could not be read."""

    def __init__(self, message, path=None):
        self.path = str(path) if path is not None else None
        super().__init__(f"{message} ({self.path})" if self.path else message)


class PayloadLengthError(VolumeFormatError):
    pass


class UnsupportedVersionError(VolumeFormatError):
    pass


class SidecarDecodeError(VolumeFormatError):
    pass


class ArtifactIOError(VolumeFormatError):
    pass


class NormalizationError(PerfusionInputError):
    pass


# --- phantom / fit ------------------------------------------------------------

class GridMismatchError(PerfusionInputError):
    """Two curves or arrays do not share the same sampling grid or shape."""


class EmptyMaskError(PerfusionInputError):
    pass


class SingularSystemError(PerfusionComputationError):
    """Deconvolution matrix has no usable singular values."""


# --- preprocess -----------------------------------------------------------------

class NoTextureError(PerfusionComputationError):
    """Registration was asked to align a constant frame."""

    def __init__(self, message="no texture"):
        super().__init__(message)


# --- vascular functions ------------------------------------------------------------

class InsufficientCandidatesError(PerfusionComputationError):
    def __init__(self, found, required):
        self.found = found
        self.required = required
        super().__init__(f"only {found} scorable voxels, {required} required")


class ZeroAreaError(PerfusionComputationError):
    pass


# --- map regressor --------------------------------------------------------------------

class ShapeMismatchError(PerfusionInputError):
    pass


class TrainingDivergenceError(PerfusionComputationError):
    def __init__(self, epoch, detail="loss is not finite"):
        self.epoch = epoch
        super().__init__(f"training diverged at epoch {epoch}: {detail}")


# --- lesion validation -------------------------------------------------------------------

class UndefinedDiceError(PerfusionComputationError):
    """Both masks are empty; the overlap is undefined."""


class ZeroVarianceError(PerfusionComputationError):
    pass


class CohortExcludedError(PerfusionComputationError):
    """Every case of a cohort was excluded from the statistics."""
