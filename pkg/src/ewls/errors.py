"""Exception hierarchy shared by the estimators, simulator and CLI."""


class EstimationError(Exception):
    """Base class for all errors raised by ewls."""


class SingularInformation(EstimationError):
    """The information matrix is too ill-conditioned to invert."""

    def __init__(self, condition: float, message: str | None = None):
        self.condition = condition
        super().__init__(
            message or f"information matrix is singular (condition number {condition:.3e})"
        )


class UndefinedEstimate(EstimationError):
    """The state estimate was queried while the information is singular."""


class NonSPDPrior(EstimationError, ValueError):
    """A prior covariance is not symmetric positive definite or is ill-conditioned."""


class InvalidMeasurement(EstimationError, ValueError):
    """A measurement has inconsistent shapes or a non-SPD noise covariance."""


class InnovationSingular(EstimationError):
    """The Kalman innovation covariance H P H^T + R could not be factored."""


class SingularPropagation(EstimationError):
    """The information-form Kalman propagation P + A Q A^T is singular."""


class ConfigInvalid(EstimationError, ValueError):
    """A scenario or filter configuration is invalid.

    ``path`` names the offending key (dotted) when known.
    """

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
