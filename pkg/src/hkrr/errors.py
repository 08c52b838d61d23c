"""Exception types shared across the package."""


class HkrrError(Exception):
    """Base class for errors raised by this package."""


class SingularSystemError(HkrrError):
    """The regularized normal equations could not be factorized, even after
    the jitter retry."""

    def __init__(self, message, min_eigenvalue=None):
        if min_eigenvalue is not None:
            message = f"{message} (estimated minimal eigenvalue {min_eigenvalue:.3e})"
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class StalledLineSearchError(HkrrError):
    """Armijo backtracking exhausted max_shrinks without sufficient decrease.

    Carries the last trial state so callers can decide how to terminate.
    """

    def __init__(self, message, step=None, trials=None, loss=None, grad_norm=None):
        super().__init__(message)
        self.step = step
        self.trials = trials
        self.loss = loss
        self.grad_norm = grad_norm


class NumericError(HkrrError):
    """An iterative numeric routine failed to converge."""


class DegenerateDataError(HkrrError, ValueError):
    """The data does not support the requested operation (e.g. all mapped
    points coincide, or a noiseless signal has zero variance)."""


class CsvParseError(HkrrError, ValueError):
    """A dataset CSV file is malformed."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no
