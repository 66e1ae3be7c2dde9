"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage errors exit 2, data/parse
errors exit 3, numeric failures exit 4.
"""


class FetchgroundError(Exception):
    """Base class for all package errors."""


class DimensionError(FetchgroundError):
    """Tensor shapes do not line up for the requested operation."""


class DomainError(FetchgroundError):
    """Input is outside an operation's mathematical domain (e.g. zero-norm vector)."""


class InputError(FetchgroundError):
    """Malformed or empty input where content is required."""


class UsageError(FetchgroundError):
    """API or CLI misuse: bad argument, missing gradient, unknown config key."""


class NumericError(FetchgroundError):
    """Non-finite value surfaced during computation."""


class DataFormatError(FetchgroundError):
    """A file on disk failed to parse or round-trip."""


class GenerationError(FetchgroundError):
    """Scene synthesis could not satisfy placement constraints."""
