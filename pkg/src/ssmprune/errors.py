"""Exception hierarchy shared across the package."""


class SsmError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(SsmError):
    pass


class ChannelMismatch(SsmError):
    pass


class NonHurwitz(SsmError):
    pass


class NonPositiveRatio(SsmError):
    pass


class UnpairedState(SsmError):
    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"state {index} has no conjugate partner within tolerance")


class UnstableState(SsmError):
    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"state {index} has |lambda_bar| >= 1")


class UnstableLayer(SsmError):
    pass


class DegenerateLayer(SsmError):
    pass


class EmptyLayer(SsmError):
    pass


class BudgetTooLarge(SsmError):
    pass


class SchemaMismatch(SsmError):
    pass


class ValidationFailed(SsmError):
    def __init__(self, report, message=None):
        self.report = report
        detail = "; ".join(str(v) for v in report)
        super().__init__(message or f"layer validation failed: {detail}")


class MalformedFile(SsmError):
    pass


class AmbiguousPairingWarning(UserWarning):
    """Two conjugate candidates were equidistant; the lowest index was chosen."""


class DegenerateLayerWarning(UserWarning):
    """All importance scores in a layer are zero; states ranked by index only."""
