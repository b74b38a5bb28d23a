"""Exception types raised across the package."""


class ScatterError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(ScatterError, ValueError):
    pass


class SingularityError(ScatterError, ValueError):
    """Green's function evaluated at coincident points."""


class SingularOperatorError(ScatterError, ArithmeticError):
    """The support-restricted system ``I - V_S Gamma_SS`` cannot be inverted."""

    def __init__(self, message, support=None, condition=None, iteration=None):
        super().__init__(message)
        self.support = support
        self.condition = condition
        self.iteration = iteration


class DivergenceError(ScatterError, ArithmeticError):
    """A reconstruction produced non-finite values."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class UndefinedCoherenceError(ScatterError, ValueError):
    pass


class DegenerateBoundError(ScatterError, ZeroDivisionError):
    pass


class PreconditionError(ScatterError, ValueError):
    """A theorem's hypotheses are violated by the supplied constants."""


class ConfigError(ScatterError, ValueError):
    pass
