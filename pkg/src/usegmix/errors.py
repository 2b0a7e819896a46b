"""Exception types shared across the package."""


class UsegmixError(Exception):
    """Base class for package-specific failures."""


class DecodeError(UsegmixError):
    """Raised when an encoded image stream cannot be decoded."""


class BackendError(UsegmixError):
    """Raised when an external backend process misbehaves or fails."""


class ConvergenceError(UsegmixError):
    """Raised when an iterative solver exhausts its iteration budget."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class PoolFormatError(UsegmixError):
    """Raised when persisted pool data fails validation."""
