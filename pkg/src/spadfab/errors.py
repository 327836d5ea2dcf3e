"""Exception hierarchy shared by every module."""


class SpadfabError(Exception):
    """Base class for all package errors."""


class ConfigError(SpadfabError, ValueError):
    """A configuration document or input file is invalid."""


class WrongLength(ConfigError):
    """A bit chain does not have the length its decoder expects."""


class InvalidClock(ConfigError):
    """A shift-register clock frequency is not positive."""


class InvalidSpec(ConfigError):
    """A combinator specification violates its invariants."""


class SpecSyntaxError(InvalidSpec):
    """A LUT spec text could not be parsed.

    Carries the 1-based ``line`` and ``column`` plus the offending ``token``.
    """

    def __init__(self, message, line, column, token):
        super().__init__(f"line {line}, column {column}: {message} (at {token!r})")
        self.line = line
        self.column = column
        self.token = token


class OutOfRange(ConfigError):
    """A bias-curve query lies outside the tabulated domain."""


class OutOfBounds(ConfigError):
    """A region does not fit inside the macropixel array."""


class MalformedStream(SpadfabError, ValueError):
    """An edge stream is not strictly increasing or does not alternate."""


class EmptyHistogram(SpadfabError, ValueError):
    """A histogram metric was requested on a histogram with no counts."""


class SimulationError(SpadfabError, RuntimeError):
    """A simulation step failed; ``location`` names the macropixel if known."""

    def __init__(self, message, location=None):
        if location is not None:
            message = f"macropixel {location}: {message}"
        super().__init__(message)
        self.location = location
