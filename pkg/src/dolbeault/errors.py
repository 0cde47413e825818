"""Exception hierarchy shared by all modules."""


class DolbeaultError(Exception):
    """Base class for every error raised by the package."""


class SplittingError(DolbeaultError, ValueError):
    """A spinor does not lie in the eigenspace an operation requires."""


class MetricError(DolbeaultError, ValueError):
    """Metric data is not positive definite or not J-compatible."""

    def __init__(self, message, location=None):
        super().__init__(message if location is None else f"{message} at grid index {location}")
        self.location = location


class HypothesisError(DolbeaultError, ValueError):
    """A theorem's hypothesis is violated, so the requested verdict is refused."""


class SolverError(DolbeaultError, RuntimeError):
    """An eigensolver failed to converge; ``diagnostics`` carries the details."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ScenarioError(DolbeaultError, ValueError):
    """A scenario file could not be parsed or exceeds the configured budget."""
