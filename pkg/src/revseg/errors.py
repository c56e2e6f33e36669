"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ValidationError -> 2,
ArtifactError -> 3, NumericError -> 4.
"""


class RevsegError(Exception):
    """Base class for all errors raised by revseg."""


class ValidationError(RevsegError):
    """Bad shapes, arguments, files, or configuration."""


class ShapeError(ValidationError):
    """Tensor shape mismatch; message names both shapes."""


class ArtifactError(RevsegError):
    """Checkpoint or manifest incompatible with the object it is loaded into."""


class NumericError(RevsegError):
    """Non-finite values where finite ones are required."""


class TapeError(RevsegError):
    """Invalid use of a gradient tape (e.g. backward called twice)."""
