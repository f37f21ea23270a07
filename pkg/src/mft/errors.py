"""Exception types shared across the package."""


class NotStabilizable(RuntimeError):
    """Riccati iteration failed to converge: no stabilizing gain exists
    (or none was found within the iteration budget) for the given (A, B)."""


class ConfigError(ValueError):
    """Experiment configuration file is missing, malformed, or inconsistent."""
