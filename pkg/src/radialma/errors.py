"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid grid, window, or run parameters."""


class ConstraintViolationError(ValueError):
    """A model constraint is violated (pole mass too large, non-normalizable family, ...)."""


class DegenerateMetricError(RuntimeError):
    """A potential fails strict positivity of u' or u'' where it is required."""

    def __init__(self, message: str, node: int | None = None, coordinate: float | None = None):
        super().__init__(message)
        self.node = node
        self.coordinate = coordinate
