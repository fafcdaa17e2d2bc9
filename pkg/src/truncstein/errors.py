"""Exception types shared across the package."""


class TruncsteinError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(TruncsteinError):
    """Invalid user input: parameters, domain spec, config file, CLI flags."""


class EmptyDomainError(ConfigError):
    """A truncation domain with no interior for the requested support."""


class SingularSystemError(TruncsteinError):
    """A linear system is singular or numerically singular.

    Carries the reciprocal condition estimate so callers can report it in
    estimator diagnostics.
    """

    def __init__(self, message, rcond=None):
        super().__init__(message)
        self.rcond = rcond


class SamplerAbort(TruncsteinError):
    """Rejection sampling gave up: acceptance rate below the abort threshold."""

    def __init__(self, message, acceptance_rate, n_proposed):
        super().__init__(message)
        self.acceptance_rate = acceptance_rate
        self.n_proposed = n_proposed


class DataDomainMismatchError(TruncsteinError):
    """Input observations fall outside the declared truncation domain."""
