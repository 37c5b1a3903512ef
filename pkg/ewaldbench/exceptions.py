"""
Exceptions Module
-----------------
Error types raised by the library. Every error derives from EwaldError so callers
(the CLI in particular) can map failures onto exit codes in one place.
"""


class EwaldError(Exception):
    """Base class for all library errors."""


class ToleranceDomainError(EwaldError, ValueError):
    """A tolerance lies outside the domain where an estimate can be inverted."""


class InfeasibleToleranceError(EwaldError):
    """No parameter set on the tuning grid reaches the requested tolerance."""


class UncalibratedModelError(EwaldError):
    """A runtime prediction was requested from an uncalibrated cost model."""


class SystemFileError(EwaldError, ValueError):
    """A particle, profile or config file could not be parsed."""


class CalibrationError(EwaldError):
    """Kernel timings were too noisy to fit the runtime model."""


class UsageError(EwaldError):
    """Inconsistent command-line flag combination."""
