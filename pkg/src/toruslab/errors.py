"""Exception hierarchy shared by every toruslab module."""


class TorusLabError(Exception):
    """Base class for all toruslab errors."""


class DimensionMismatch(TorusLabError, ValueError):
    pass


class DeterminantNotOne(TorusLabError, ValueError):
    pass


class WeightsInvalid(TorusLabError, ValueError):
    pass


class UnknownLabel(TorusLabError, KeyError):
    pass


class ExactnessRequired(TorusLabError, TypeError):
    """Raised when an exact-only routine receives floating-point data."""


class SupportCapExceeded(TorusLabError, RuntimeError):
    """Exact evolution outgrew its atom budget; fall back to Monte Carlo."""


class CapExceeded(TorusLabError, RuntimeError):
    """Orbit enumeration stopped at its cap without a verdict."""


class NotFinite(TorusLabError, ValueError):
    pass


class PreconditionViolated(TorusLabError, ValueError):
    pass


class FrequencyNotDivisible(TorusLabError, ValueError):
    pass


class EnumerationTooLarge(TorusLabError, RuntimeError):
    pass


class ZeroMass(TorusLabError, ValueError):
    pass


class DenominatorDividesP(TorusLabError, ValueError):
    pass


class GroupTooLarge(TorusLabError, RuntimeError):
    pass


class ConfigInvalid(TorusLabError, ValueError):
    pass
