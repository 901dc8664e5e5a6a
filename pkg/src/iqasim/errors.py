"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument is outside the domain an operation is defined on."""


class UnsupportedProfileError(DomainError):
    """The requested quantity is undefined for this field profile."""


class CapacityError(RuntimeError):
    """The problem size exceeds what a routine is willing to enumerate."""


class ConfigError(ValueError):
    """A run configuration is malformed, unknown, or inconsistent."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class IntegratorError(RuntimeError):
    """A numerical propagation step failed to converge."""


class ResumeMismatchError(RuntimeError):
    """An existing record store was produced by a different configuration."""
