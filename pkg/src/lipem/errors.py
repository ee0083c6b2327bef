"""Exception taxonomy shared across the package.

Every error raised by library code derives from :class:`LipemError` so that
callers (and the command line front end) can map failures onto exit codes
without string matching.
"""

from __future__ import annotations


class LipemError(Exception):
    """Base class for all package errors."""

    kind = "error"

    def __str__(self) -> str:  # single-line, machine parseable
        msg = super().__str__()
        return f"{self.kind}: {msg}" if msg else self.kind


class InvalidConfigurationError(LipemError):
    """A parameter or configuration document is outside its contract."""

    kind = "invalid-configuration"

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class InsufficientDataError(LipemError):
    """A dataset is too small for the requested fit."""

    kind = "insufficient-data"


class SingularFitError(LipemError):
    """Normal equations (or another factorization) are rank deficient."""

    kind = "singular-fit"


class InvalidChoiceError(LipemError):
    """A judged choice lies outside the offered subgroup and the null."""

    kind = "invalid-choice"


class OptimizationFailureError(LipemError):
    """An iterative fit hit its iteration cap before reaching tolerance.

    Carries the last iterate so callers can inspect how far the
    optimizer got.
    """

    kind = "optimization-failure"

    def __init__(self, message: str, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class TransportError(LipemError):
    """A judge transport failed (network, HTTP status, missing transport)."""

    kind = "transport"


class RateLimitedError(TransportError):
    """The judge endpoint asked us to slow down (HTTP 429)."""

    kind = "transport-rate-limited"


class MalformedJudgeResponseError(LipemError):
    """The judge reply could not be parsed into a valid choice."""

    kind = "malformed-judge-response"


class DegenerateNullError(LipemError):
    """Every mixture component vanished; a parametric null is required."""

    kind = "degenerate-null"


class NonFiniteLikelihoodError(LipemError):
    """A log-likelihood ratio became NaN or infinite for a named source."""

    kind = "non-finite-likelihood"

    def __init__(self, message: str, source_index: int | None = None):
        super().__init__(message)
        self.source_index = source_index


class DataNotFoundError(LipemError):
    """An input file is absent; the message carries how to obtain it."""

    kind = "data-not-found"


class ParseError(LipemError):
    """A text input failed to parse; the message names the line."""

    kind = "parse"

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number
