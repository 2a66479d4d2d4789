"""Exception hierarchy shared across the library."""


class KernelBiasError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(KernelBiasError):
    """Invalid configuration: bad parameter values, unknown preset or key."""


class KernelOverflowError(KernelBiasError):
    """A kernel evaluation produced a non-finite value."""


class NumericsError(KernelBiasError):
    """Non-finite values appeared where the math guarantees finite ones."""


class PreconditionError(KernelBiasError):
    """An operation's stated precondition does not hold for these inputs."""


class ResourceLimitError(KernelBiasError):
    """A requested dense materialization exceeds the configured entry cap."""
