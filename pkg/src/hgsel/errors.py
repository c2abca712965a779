"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: validation problems exit 1, numerical
failures exit 2, failed internal checks exit 3.
"""


class HgselError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(HgselError):
    """Invalid configuration, malformed input, or violated precondition."""

    exit_code = 1


class DataFormatError(ValidationError):
    """On-disk dataset violates the expected format; message carries file/line."""


class EdgelessGraphError(ValidationError):
    """A homophily ratio was requested for a subgraph without edges."""


class NumericalError(HgselError):
    """Non-finite values encountered during optimization or solving."""

    exit_code = 2


class CheckFailedError(HgselError):
    """An executable correctness check did not hold."""

    exit_code = 3
