"""Exception hierarchy shared by every zcnas module."""


class ZcnasError(Exception):
    """Base class for all package errors."""


class ConfigError(ZcnasError, ValueError):
    pass


class ArgumentError(ZcnasError, ValueError):
    pass


class NumericError(ZcnasError, ArithmeticError):
    """A NaN or Inf appeared while evaluating a network."""

    def __init__(self, message, node=None):
        super().__init__(message if node is None else f"{message} (node {node})")
        self.node = node


class GenotypeParseError(ZcnasError, ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class UnsupportedOperation(ZcnasError):
    pass


class InfeasibleBudget(ZcnasError):
    pass


class UndefinedCorrelation(ZcnasError, ValueError):
    pass


class LoadError(ZcnasError, ValueError):
    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class JoinError(ZcnasError, KeyError):
    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__(f"ids not found in the join: {', '.join(map(str, self.missing))}")

    def __str__(self):
        return self.args[0]
