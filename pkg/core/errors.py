"""Exception hierarchy shared by the core modules and the command line.

Every exception carries the process exit code the CLI reports for it.
"""


class NegcnError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class UsageError(NegcnError):
    """Invalid flags, configuration values or call arguments."""

    exit_code = 1


class DataError(NegcnError):
    """Malformed, inconsistent or missing input data."""

    exit_code = 2


class GraphError(DataError):
    """Graph construction or query on invalid node ids or structure."""


class DimensionError(DataError):
    """Matrix/vector shapes that do not line up."""


class ChecksumError(DataError):
    """A bundle file does not match the checksum recorded in its manifest."""


class BundleFormatError(DataError):
    """A malformed line or document inside a bundle file."""

    def __init__(self, path, message, line_number=None):
        self.path = str(path)
        self.line_number = line_number
        where = f"{self.path}:{line_number}" if line_number is not None else self.path
        super().__init__(f"{where}: {message}")


class NumericError(NegcnError):
    """A numeric computation failed (non-finite values, degenerate inputs)."""

    exit_code = 3


class DivergenceError(NumericError):
    """Training produced a non-finite loss."""


class DegenerateExpectationError(NumericError):
    """A closed-form expectation has an empty neighbor set (zero denominator)."""
