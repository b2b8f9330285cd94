"""Exception and warning types raised by the permfield engines."""


class PermfieldError(Exception):
    """Base class for every error raised by permfield."""


class ModelValidationError(PermfieldError, ValueError):
    """Input describes an object the engines refuse to build."""


class NonTransientError(ModelValidationError):
    pass


class NegativeRateError(ModelValidationError):
    pass


class NonpositiveWeightError(ModelValidationError):
    pass


class KernelValidationError(ModelValidationError):
    pass


class NotAMetricError(ModelValidationError):
    pass


class NumericalError(PermfieldError, ArithmeticError):
    """A computation could not reach the requested accuracy."""


class SingularGeneratorError(NumericalError):
    pass


class UnderflowBridgeError(NumericalError):
    pass


class QuadratureFailureError(NumericalError):
    pass


class TooLargeError(NumericalError):
    pass


class NotPositiveDefiniteError(NumericalError):
    pass


class IdentityViolationError(NumericalError):
    pass


class HeavyTailError(NumericalError):
    pass


class PermfieldWarning(UserWarning):
    pass


class DualityWarning(PermfieldWarning):
    pass


class PositivityWarning(PermfieldWarning):
    pass


class SectorialWarning(PermfieldWarning):
    pass
