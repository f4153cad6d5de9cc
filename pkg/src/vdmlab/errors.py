"""Exception types shared across the package."""


class VdmLabError(Exception):
    """Base class for all package errors."""


class InvalidSpec(VdmLabError, ValueError):
    """A deformation spec has coefficients outside their admissible range."""


class DomainError(VdmLabError, ValueError):
    """A loss value lies outside the domain of a deformation mapping."""

    def __init__(self, message, loss=None):
        super().__init__(message)
        self.loss = loss


class DimensionMismatch(VdmLabError, ValueError):
    pass


class ShapeMismatch(VdmLabError, ValueError):
    pass


class NonFinite(VdmLabError, ArithmeticError):
    """Evaluation produced inf or nan."""


class Diverged(VdmLabError, ArithmeticError):
    pass


class StructureError(VdmLabError):
    """A bracket does not contain the extremum structure of a local M region."""


class PreconditionError(VdmLabError):
    pass


class ZeroNorm(VdmLabError, ValueError):
    pass


class DegenerateDirection(VdmLabError, ValueError):
    pass
