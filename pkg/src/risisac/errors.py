"""Exception types raised across the package."""


class RisIsacError(Exception):
    """Base class for all package errors."""


class ConfigError(RisIsacError, ValueError):
    pass


class DomainError(RisIsacError, ValueError):
    """An argument lies outside the domain of a formula."""


class StructuralError(RisIsacError, ValueError):
    """Array shapes or matrix structure do not match the contract."""


class GeometryError(RisIsacError):
    pass


class StaleCacheError(RisIsacError):
    """A cached derived quantity no longer matches the beamforming state."""


class InfeasibleRate(RisIsacError):
    """The SINR targets cannot be met jointly within the power budget.

    ``max_sinr`` holds the largest per-user SINR vector, proportional to the
    requested targets, that was found attainable.
    """

    def __init__(self, message, max_sinr=None):
        super().__init__(message)
        self.max_sinr = max_sinr


class NoFeasibleDraw(RisIsacError):
    pass


class FeasibilityViolation(RisIsacError):
    pass


class NoFeasibleStart(RisIsacError):
    pass


class StepTooLarge(RisIsacError):
    """A retraction was asked to normalize a zero vector."""


class ManifoldContractError(RisIsacError):
    """A tangent vector was used at a point it is not attached to."""


class OracleTooLarge(RisIsacError):
    pass


class OracleInfeasible(RisIsacError):
    def __init__(self, message, feasible_count=0):
        super().__init__(message)
        self.feasible_count = feasible_count
