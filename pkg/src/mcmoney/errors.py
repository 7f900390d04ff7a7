"""Exception types shared across the package."""


class McMoneyError(Exception):
    """Base class for all package errors."""


class ParseError(McMoneyError, ValueError):
    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class EmptyInputError(McMoneyError, ValueError):
    pass


class ConfigError(McMoneyError, ValueError):
    pass


class ContractViolation(McMoneyError, ValueError):
    """A caller broke a documented precondition (bad shape, bad index, NaN input)."""


class NumericalFailure(McMoneyError, ArithmeticError):
    def __init__(self, message, iteration=None):
        self.iteration = iteration
        super().__init__(message)
