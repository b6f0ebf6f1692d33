"""Exception hierarchy shared by the whole package."""


class RelBGKError(Exception):
    """Base class for every error raised by :mod:`relbgk`."""


class DomainError(RelBGKError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class BesselUnderflowError(DomainError):
    """The requested Bessel value underflows double precision."""


class ConvergenceError(RelBGKError, RuntimeError):
    """An iterative solve failed to reach its tolerance."""


class NonTimelikeError(DomainError):
    """The particle four-current is not timelike (N^0 <= |N|)."""


class AlphaOutOfRangeError(DomainError):
    """alpha = (1/n) int f dq/q0 fell outside (0, 1)."""


class SchemeError(RelBGKError, RuntimeError):
    """A time-stepping scheme violated one of its structural guarantees."""


class ConfigError(RelBGKError, ValueError):
    """A scenario configuration failed validation."""
