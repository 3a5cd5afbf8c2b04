"""Exception hierarchy."""


class FreeDeconvError(Exception):
    """Base class for errors raised by this package."""


class MeasureError(FreeDeconvError, ValueError):
    """An atomic measure or moment sequence violates its invariants."""


class ParseError(FreeDeconvError, ValueError):
    """Malformed text input; ``line`` is 1-based (``None`` if unknown)."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class PoleError(FreeDeconvError, ZeroDivisionError):
    """A transform was evaluated at an atom of the measure."""


class FirstMomentZeroError(FreeDeconvError, ValueError):
    """Multiplicative deconvolution needs a nonvanishing first moment."""


class RootFindingError(FreeDeconvError, ArithmeticError):
    """Eigenvalue recovery from power sums failed."""


class DomainError(FreeDeconvError, ValueError):
    """Parameters fall outside the region where a closed form applies."""


class NoSolutionError(FreeDeconvError, ValueError):
    """Observed quantities are inconsistent with the assumed model."""


class BranchTrackingError(FreeDeconvError, ArithmeticError):
    """Root continuation along a grid jumped between branches."""

    def __init__(self, message, z=None):
        self.z = z
        if z is not None:
            message = f"{message} (at z={z})"
        super().__init__(message)


class MassRoundingError(FreeDeconvError, ValueError):
    """A measure cannot be realized by a diagonal matrix of the requested size."""


class RankError(FreeDeconvError, ValueError):
    """Requested more atoms than the model rank allows."""
