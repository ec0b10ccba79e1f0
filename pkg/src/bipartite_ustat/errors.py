"""Exception hierarchy.

Every exception carries the CLI exit code it maps to: 2 for data and
validation problems, 3 for numeric failures (degeneracy, overflow).
"""


class UStatError(Exception):
    exit_code = 2


class FormatError(UStatError, ValueError):
    """Malformed input file (ragged rows, non-numeric cells)."""


class ValidationError(UStatError, ValueError):
    """Parameters or inputs outside an operation's domain."""


class SizeError(ValidationError):
    """Matrix too small for the requested kernel or operation."""


class DomainError(ValidationError):
    """Data of the wrong kind for a statistic (e.g. counts passed to a motif)."""


class ComplexityError(ValidationError):
    """Enumeration would exceed the configured term budget."""


class UnknownKernelError(UStatError, LookupError):
    pass


class NumericError(UStatError, ArithmeticError):
    exit_code = 3


class CombinatorialOverflow(NumericError, OverflowError):
    pass


class DegeneracyError(NumericError):
    """The estimated asymptotic variance vanishes; studentizing is meaningless."""


class SamplingError(NumericError):
    """A sampled mean fell outside the emission's support."""
