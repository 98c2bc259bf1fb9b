"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class NumericalDomainError(ArithmeticError):
    """A value left the numerical domain an algorithm requires."""


class TrainingAbortedError(RuntimeError):
    """Training stopped early; carries the path of the diagnostic dump."""

    def __init__(self, message: str, dump_path=None):
        super().__init__(message)
        self.dump_path = dump_path
