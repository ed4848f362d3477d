"""Exception types raised by the assimilation library."""


class LmcpfError(Exception):
    """Base class for all library errors."""


class AllWeightsZero(LmcpfError):
    """No effective observation at an analysis point."""


class NotPositiveDefinite(LmcpfError):
    pass


class NotSymmetric(LmcpfError):
    pass


class DimensionMismatch(LmcpfError, ValueError):
    pass


class IndexOutOfRange(LmcpfError, IndexError):
    pass


class WeightSumMismatch(LmcpfError, ValueError):
    pass


class CoverageGap(LmcpfError):
    """Analysis points do not cover the model grid."""


class NonPositiveInput(LmcpfError, ValueError):
    pass


class ConfigError(LmcpfError, ValueError):
    pass


class NonFiniteState(LmcpfError, FloatingPointError):
    """Model integration produced inf/nan.

    ``member`` and ``cycle`` are filled in as the error propagates outwards.
    """

    def __init__(self, message, member=None, cycle=None):
        super().__init__(message)
        self.member = member
        self.cycle = cycle

    def __str__(self):
        parts = [super().__str__()]
        if self.member is not None:
            parts.append(f"member={self.member}")
        if self.cycle is not None:
            parts.append(f"cycle={self.cycle}")
        return " ".join(parts)
