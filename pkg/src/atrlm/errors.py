"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`AtrlmError`
so callers (notably the CLI) can separate user-facing failures from bugs.
"""

from __future__ import annotations


class AtrlmError(Exception):
    """Base class of all package errors."""


class InvalidInputError(AtrlmError, ValueError):
    """Input data violates a precondition (non-finite values, wrong shape...)."""


class InvalidParameterError(AtrlmError, ValueError):
    """A numeric or enumerated parameter is out of its legal range."""


class ConfigurationError(AtrlmError, ValueError):
    """Incompatible options, e.g. constrained decoding without a lexicon."""


class ParseError(AtrlmError, ValueError):
    """A file does not follow its format. Carries the offending location."""

    def __init__(self, message: str, path: object = None, lineno: int | None = None):
        self.path = None if path is None else str(path)
        self.lineno = lineno
        where = ""
        if self.path is not None:
            where = self.path
        if lineno is not None:
            where = f"{where}:{lineno}" if where else f"line {lineno}"
        super().__init__(f"{where}: {message}" if where else message)
        self.message = message


class DegenerateInputError(AtrlmError, ValueError):
    """Statistic undefined for the data, e.g. correlation of a constant vector."""


class CalibrationDegenerateError(DegenerateInputError):
    """Confidence or recognition rate constant at every grid temperature."""


class UndefinedReferenceError(AtrlmError, ValueError):
    """Error rate requested against an empty reference."""


class UndefinedDeltaError(AtrlmError, ValueError):
    """Relative change requested from a zero baseline."""
