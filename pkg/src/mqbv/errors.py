"""Exception hierarchy shared by all modules."""


class MQBVError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(MQBVError, ValueError):
    pass


class DomainError(MQBVError, ValueError):
    pass


class EvaluationError(MQBVError, ArithmeticError):
    pass


class ConstructionError(MQBVError):
    pass


class OracleAccuracyError(MQBVError):
    pass


class ConfigError(MQBVError, ValueError):
    pass


class IterationDivergenceError(MQBVError):
    """Picard iteration did not reach the tolerance.

    The last sup-node residual and the full residual history are kept so the
    caller can report how far the iteration got.
    """

    def __init__(self, message, residual, history=()):
        super().__init__(message)
        self.residual = residual
        self.history = list(history)
