"""Exception hierarchy. Every failure mode raised by the library derives from CoxemError."""


class CoxemError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class DataError(CoxemError):
    """Malformed input data (bad rows, bad schema, impossible values)."""

    exit_code = 3

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DesignError(CoxemError):
    """Infeasible or inconsistent simulation design."""

    exit_code = 2


class SingularCovarianceError(CoxemError):
    """A covariance block required to be invertible is numerically singular."""

    exit_code = 4


class IntegrationError(CoxemError):
    """Numerical integration produced a non-finite or unusable result."""

    exit_code = 4


class NonConvergenceError(CoxemError):
    """An iterative solver hit its iteration cap; carries the last iterate."""

    exit_code = 4

    def __init__(self, message, beta=None):
        super().__init__(message)
        self.beta = beta


class AscentError(CoxemError):
    """Observed-data log-likelihood decreased during EM (debug mode only)."""

    exit_code = 4


class InferenceUnreliableError(CoxemError):
    """Too many bootstrap replicates failed for the results to be trusted."""

    exit_code = 4


class ContractViolationError(CoxemError, ValueError):
    """A caller violated a documented precondition."""

    exit_code = 2
