"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid scenario configuration or inconsistent model inputs."""


class NetworkError(ValueError):
    """A liability structure violates one of its invariants."""


class GuardViolation(RuntimeError):
    """A problem size exceeds a configured cap (node count, candidate count)."""


class ConvergenceError(RuntimeError):
    """An iteration exceeded its cap; indicates a bug rather than a hard instance."""


class CertificationError(RuntimeError):
    """An independent re-evaluation disagreed with a computed solution."""
