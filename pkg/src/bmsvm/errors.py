"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: data problems exit 2, numerical
failures exit 3 (usage/config errors exit 1 and are raised by the CLI
itself).
"""


class BmsvmError(Exception):
    """Base class for all package errors."""


class ParameterError(BmsvmError, ValueError):
    """A parameter is outside its mathematical domain (e.g. theta <= 0)."""


class ShapeError(BmsvmError, ValueError):
    """Array dimensions are inconsistent with each other."""


class ConstraintError(BmsvmError, ValueError):
    """A sum-to-zero constraint is violated beyond tolerance."""


class ConditioningError(BmsvmError):
    """A factorization failed even after jitter regularization."""

    def __init__(self, message: str, smallest_eigenvalue: float | None = None):
        super().__init__(message)
        self.smallest_eigenvalue = smallest_eigenvalue


class DegenerateMatrixError(BmsvmError):
    """All eigenvalues fell below the rank tolerance."""


class DivergenceError(BmsvmError):
    """An optimizer produced a non-finite objective value."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class DataError(BmsvmError):
    """A dataset could not be parsed or is structurally invalid."""


class FoldDegeneracyError(DataError):
    """A resampling fold lost every member of some class."""

    def __init__(self, message: str, class_label: int | None = None):
        super().__init__(message)
        self.class_label = class_label
