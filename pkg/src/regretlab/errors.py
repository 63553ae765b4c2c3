"""Exception hierarchy shared by every regretlab module."""


class RegretLabError(Exception):
    """Base class for all library errors."""


class ArgumentError(RegretLabError, ValueError):
    """An argument is out of range or otherwise malformed."""


class ContractError(RegretLabError):
    """A precondition on the combination of inputs does not hold."""


class NumericalError(RegretLabError, ArithmeticError):
    """A linear solve or iteration failed to meet its tolerance."""


class ConvergenceError(NumericalError):
    pass


class InconsistentObservationError(RegretLabError):
    """An observation has zero likelihood under every hypothesis of a belief."""


class InsufficientDataError(RegretLabError):
    pass


class ConfigError(RegretLabError, ValueError):
    """Invalid configuration or MDP file; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)
