"""Exception types shared across the package."""


class AntifolkError(Exception):
    """Base class for errors raised by this package."""


class GuardError(AntifolkError):
    """An enumeration would exceed a configured size guard."""


class IncompatibleMonitoringError(AntifolkError, ValueError):
    """A verifier was handed the wrong kind of monitoring structure."""


class ZeroProbabilityError(AntifolkError, ValueError):
    """Conditioning on an event that has probability zero."""
