"""Exception hierarchy shared across the package.

Input/data problems derive from InputError, numerical failures from
NumericalError; the CLI maps these onto exit codes 1 and 2.
"""


class EvGridPlanError(Exception):
    """Base class for all package errors."""


class InputError(EvGridPlanError):
    """Malformed or inconsistent input data."""


class NumericalError(EvGridPlanError):
    """A numerical procedure failed (singular system, non-convergence)."""
