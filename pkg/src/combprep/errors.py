"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration (bad schema, unknown fields, inconsistent values)."""


class CapacityError(RuntimeError):
    """Problem size exceeds what the requested backend can handle."""


class ConvergenceError(RuntimeError):
    """An iterative routine failed to reach its convergence target."""


class EvaluationError(RuntimeError):
    """A user-supplied function returned an unusable value (NaN/inf)."""


class StateError(RuntimeError):
    """A quantum state violates a precondition (e.g. not normalized)."""
