"""Exception hierarchy for the calibration engine."""


class ProtoCalError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(ProtoCalError, ValueError):
    pass


class InvalidShape(ProtoCalError, ValueError):
    pass


class InvalidConfig(ProtoCalError, ValueError):
    pass


class InvalidLabel(ProtoCalError, ValueError):
    pass


class MissingLabels(ProtoCalError, ValueError):
    pass


class InsufficientData(ProtoCalError, ValueError):
    pass


class SingularCovariance(ProtoCalError, ArithmeticError):
    """A covariance matrix failed Cholesky even after the ridge was added."""


class InvalidAssignment(ProtoCalError, ValueError):
    pass


class InvalidEstimate(ProtoCalError, ValueError):
    pass


class OracleTooLarge(ProtoCalError, ValueError):
    pass


class EstimationFailed(ProtoCalError, RuntimeError):
    """Every restart of the mixture fit failed."""


class InvalidScenario(ProtoCalError, ValueError):
    pass


class BinaryOnly(ProtoCalError, ValueError):
    pass
