"""Exception hierarchy shared across the package.

Each class carries the process exit code the command-line front end uses
when the error escapes a subcommand.
"""


class DualScoreError(Exception):
    """Base class for all package errors."""

    exit_code = 4


class InvalidInputError(DualScoreError, ValueError):
    exit_code = 3


class InvalidCandidateError(InvalidInputError):
    """An optimizer candidate cannot be mapped onto the constraint set."""


class DegenerateIndexError(DualScoreError, ArithmeticError):
    """The index values have zero spread, so they cannot be standardized."""

    exit_code = 4


class PreconditionError(DualScoreError):
    exit_code = 3


class SingularityError(DualScoreError, ArithmeticError):
    exit_code = 4


class SchemaError(DualScoreError, ValueError):
    exit_code = 3


class DataError(DualScoreError, ValueError):
    """A data file is malformed; the message names row and column."""

    exit_code = 3


class NumericFailure(DualScoreError, ArithmeticError):
    exit_code = 4
