"""Exception types raised by the simulator.

Each maps to one CLI exit code (see :mod:`seltrain.cli`).
"""


class SeltrainError(Exception):
    """Base class for all simulator errors."""


class ConfigError(SeltrainError, ValueError):
    """Invalid scenario configuration or malformed config file."""


class InfeasibleError(SeltrainError, ValueError):
    """A policy cannot run at the requested training length (e.g. FT with tau < K)."""


class ConvergenceError(SeltrainError, RuntimeError):
    """The fixed-point solver hit its iteration cap.

    The last iterate is kept on ``last`` so callers can inspect it.
    """

    def __init__(self, message, last=None, iterations=None, residual=None):
        super().__init__(message)
        self.last = last
        self.iterations = iterations
        self.residual = residual


class ContractError(SeltrainError, ValueError):
    """Arguments violate an operation's preconditions (shapes, finiteness, membership)."""
