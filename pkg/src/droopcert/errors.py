"""Exception types shared across the package."""


class DroopcertError(Exception):
    """Base class for all package-specific errors."""


class CaseFileError(DroopcertError):
    """A case file failed to parse or violates the schema."""


class ConfigError(DroopcertError):
    """An experiment config file failed to parse or violates its schema."""


class PowerFlowError(DroopcertError):
    """Power flow did not converge or hit a singular Jacobian."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ModelError(DroopcertError):
    """Invalid nodal model parameters or an impossible parameter mapping."""


class PoleError(ModelError):
    """Transfer-matrix evaluation requested at a pole of the realization."""


class PhaseConditionError(DroopcertError):
    """A neighbor phase difference is >= pi/2, so the droop bound is undefined."""


class InfeasibleAlphaError(DroopcertError):
    """No edge-wise droop decomposition satisfies the edge bounds at some node."""

    def __init__(self, message, nodes=()):
        super().__init__(message)
        self.nodes = tuple(nodes)


class ConsistencyError(DroopcertError):
    """Two routes that must agree (analytic vs numerical) disagree beyond tolerance."""


class BracketError(DroopcertError):
    """A bisection bracket has the same verdict at both endpoints."""
