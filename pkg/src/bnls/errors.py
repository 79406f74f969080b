"""Exception types shared across the package."""

from __future__ import annotations


class BNLSError(Exception):
    """Base class for all package errors."""


class NumericalFailure(BNLSError):
    """A computation ran but did not produce a trustworthy result."""


class Unconverged(NumericalFailure):
    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state


class Diverged(NumericalFailure):
    def __init__(self, message: str, suggestion: float | None = None):
        super().__init__(message)
        self.suggestion = suggestion


class TailEscape(NumericalFailure):
    """A dilated field leaked mass into the periodized box boundary."""


class InconclusiveBound(NumericalFailure):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class NoBracket(NumericalFailure):
    def __init__(self, message: str, widest: tuple[float, float] | None = None, records=None):
        super().__init__(message)
        self.widest = widest
        self.records = records or []


class NonFinite(NumericalFailure):
    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class ConfigError(BNLSError, ValueError):
    """Invalid user configuration; the message names the offending field."""
