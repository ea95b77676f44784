"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class GenCondError(Exception):
    """Base class for all package errors."""


class ShapeError(GenCondError, ValueError):
    """Operand dimensions do not conform."""


class NumericalFailure(GenCondError, ArithmeticError):
    """A factorization did not converge or produced non-finite values."""


class CapacityError(GenCondError, MemoryError):
    """A dense Kronecker-sized object would exceed the configured memory budget."""


class InvalidProblemError(GenCondError, ValueError):
    """A problem pair violates the uniqueness assumptions.

    ``assumption`` names the failed check (``"dimensions"``, ``"positive_definite"``
    or ``"rank"``).
    """

    def __init__(self, message: str, assumption: str):
        super().__init__(message)
        self.assumption = assumption


class DegenerateOutputError(GenCondError, ZeroDivisionError):
    """The quantity being conditioned is zero, so relative measures are undefined."""


class ParameterError(GenCondError, ValueError):
    """An estimator or generator parameter is outside its admissible range."""


class GenerationFailure(GenCondError, RuntimeError):
    """The test-problem generator could not produce a valid pair."""

    def __init__(self, message: str, spec: object = None):
        super().__init__(message)
        self.spec = spec
