"""Exception types shared across the package.

The split mirrors the CLI exit codes: problems with user-supplied data
raise :class:`InputError` (exit 2), while numerical failures raise
:class:`NumericError` or one of its subclasses (exit 3).
"""


class RobustLowRankError(Exception):
    """Base class for all package errors."""


class InputError(RobustLowRankError, ValueError):
    """Malformed or out-of-contract input (bad shapes, NaNs, bad options)."""


class NumericError(RobustLowRankError, ArithmeticError):
    """A numerical procedure could not produce a valid result."""


class DegenerateDataError(NumericError):
    """Data is rank-deficient or otherwise too degenerate for the request."""


class DegenerateScaleError(NumericError):
    """A scale estimate collapsed to zero (constant or all-zero input)."""


class ConvergenceError(NumericError):
    """An iterative solver failed to converge within its iteration budget."""
