"""Exception hierarchy shared by all modules."""


class HalpernRatesError(Exception):
    """Base class for every error raised by this package."""


class DomainError(HalpernRatesError, ValueError):
    """An argument lies outside the range where a bound is valid."""


class ScheduleDomainError(DomainError):
    """A step size fell outside [0, 1]."""


class MissingModulusError(HalpernRatesError, LookupError):
    """A schedule lacks the modulus an operation needs."""


class ModulusKindError(HalpernRatesError, TypeError):
    """A modulus of the wrong kind was passed."""


class PreconditionError(HalpernRatesError, ValueError):
    """A documented precondition of an operation does not hold."""


class ShapeError(HalpernRatesError, ValueError):
    """Point dimension does not match the operator."""


class NumericBlowupError(HalpernRatesError, FloatingPointError):
    """An iteration produced a non-finite value."""


class ConfigError(HalpernRatesError, ValueError):
    """An experiment config failed validation.

    ``path`` names the offending field, e.g. ``schedule.moduli.theta``.
    """

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
