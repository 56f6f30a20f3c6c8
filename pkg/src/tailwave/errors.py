"""Exception hierarchy shared by all tailwave modules."""


class TailwaveError(Exception):
    """Base class for every error raised by this package."""


class DomainError(TailwaveError, ValueError):
    """Input lies outside the domain where the quantity is defined."""


class ConvergenceError(TailwaveError, RuntimeError):
    pass


class NoHorizonError(TailwaveError, ValueError):
    pass


class DegenerateError(TailwaveError, ValueError):
    """Metric table is singular (horizon or coordinate axis)."""


class GridError(TailwaveError, ValueError):
    pass


class ClassError(TailwaveError, ValueError):
    """Requested decay exponent falls outside the coefficient class."""


class StencilError(TailwaveError, ValueError):
    pass


class ResolutionError(TailwaveError, ValueError):
    pass


class BlowupError(TailwaveError, RuntimeError):
    """Non-finite values appeared during an evolution.

    ``last_good`` holds the last finite row (may be None).
    """

    def __init__(self, message, last_good=None, row=None):
        super().__init__(message)
        self.last_good = last_good
        self.row = row


class FloorError(TailwaveError, ValueError):
    """Field amplitude is below the noise floor; a fit would be fabricated."""


class WindowError(TailwaveError, ValueError):
    pass


class RegionError(TailwaveError, ValueError):
    pass


class CoverageError(TailwaveError, ValueError):
    pass


class AmbiguousEtaError(TailwaveError, ValueError):
    """eta == 1 sits exactly on the switch of the eta-tilde table."""


class RuleError(TailwaveError, ValueError):
    pass


class NonTerminationError(TailwaveError, RuntimeError):
    pass


class ConfigError(TailwaveError, ValueError):
    pass
