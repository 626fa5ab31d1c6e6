"""Exception hierarchy shared by every sdc_forge module."""


class SdcForgeError(Exception):
    """Base class for all toolkit errors."""


class UnknownDtype(SdcForgeError, ValueError):
    pass


class NotACorruption(SdcForgeError, ValueError):
    """Golden and corrupted words are identical."""


class InadmissibleCategory(SdcForgeError, ValueError):
    """Category cannot be encoded in the requested format (e.g. NaN on UINT32)."""


class UnobservableInjection(SdcForgeError, ValueError):
    """The requested corruption would leave the golden word unchanged."""


class SizeMismatch(SdcForgeError, ValueError):
    pass


class ShapeMismatch(SdcForgeError, ValueError):
    pass


class ContextMismatch(SdcForgeError, ValueError):
    pass


class EmptyAccumulator(SdcForgeError, ValueError):
    pass


class SchemaVersionMismatch(SdcForgeError, ValueError):
    pass


class InvariantViolation(SdcForgeError, ValueError):
    pass


class RateOverflow(SdcForgeError, ValueError):
    def __init__(self, lane, total_rate):
        self.lane = lane
        self.total_rate = total_rate
        super().__init__(
            f"lane {lane}: summed per-element corruption rate {total_rate:.6g} exceeds 1"
        )


class NoAdmissibleMask(SdcForgeError, RuntimeError):
    pass


class ZeroLfsrSeed(SdcForgeError, ValueError):
    pass


class DimensionMismatch(SdcForgeError, ValueError):
    pass


class UnknownFixture(SdcForgeError, KeyError):
    pass
