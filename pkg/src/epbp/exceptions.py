"""Exception hierarchy shared by all inference modules."""


class EPBPError(Exception):
    """Base class for errors raised by this package."""


class InvalidInputError(EPBPError, ValueError):
    """Raised when an argument violates a documented precondition."""


class UnsupportedVariantError(EPBPError, NotImplementedError):
    """Raised when an operation is not defined for a kernel variant."""


class NotATreeError(InvalidInputError):
    pass


class UnsupportedGraphError(InvalidInputError):
    pass


class ImproperFactorError(EPBPError, ArithmeticError):
    """Raised when moments are requested from a factor with precision <= 0."""


class DegenerateWeightsError(EPBPError, ArithmeticError):
    """Raised when every importance weight underflows."""


class NumericalFailureError(EPBPError, ArithmeticError):
    pass


class MeshMismatchError(InvalidInputError):
    pass


class MalformedHeaderError(EPBPError, ValueError):
    pass


class TruncatedDataError(EPBPError, ValueError):
    pass
