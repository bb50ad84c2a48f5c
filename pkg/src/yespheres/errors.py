"""Exception hierarchy shared by all modules."""


class YeSpheresError(Exception):
    """Base class for package errors."""


class DomainError(YeSpheresError, ValueError):
    """An input lies outside the domain of the requested operation."""


class CapabilityError(YeSpheresError):
    """The requested operation is not supported for the given inputs."""


class ConfigurationError(YeSpheresError, ValueError):
    """Invalid configuration or construction parameters."""


class ConsistencyError(YeSpheresError):
    """A mathematical precondition failed numerically."""


class IntegrationError(YeSpheresError):
    """The ODE integrator could not reach the requested tolerance."""

    def __init__(self, message: str, achieved_tol: float | None = None):
        super().__init__(message)
        self.achieved_tol = achieved_tol


class ContinuationError(YeSpheresError):
    """Continuation in the scale parameter stalled."""

    def __init__(self, message: str, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class AssemblyError(YeSpheresError):
    """Finite-difference assembly produced an inconsistent response."""


class PipelineError(YeSpheresError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the original error."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
