"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    pass


class ResourceLimitError(RuntimeError):
    """Raised when an exact (exponential-cost) computation exceeds its size cap."""


class NotFoundError(LookupError):
    pass


class OptimizationError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class InconsistencyError(RuntimeError):
    """A numerical identity that must hold by construction was violated."""


class UndefinedAutocorrelationError(ValueError):
    pass


class ConfigError(ValueError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
