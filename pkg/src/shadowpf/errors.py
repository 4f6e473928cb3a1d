"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid argument supplied by the caller."""


class ResourceError(RuntimeError):
    """A dense or symbolic computation would exceed the configured limits."""


class StepSizeError(RuntimeError):
    """An imaginary-time step is too large for the current trial energy."""


class ExpansionError(RuntimeError):
    """A polynomial expansion failed its self-certification gate."""


class ScheduleStallError(RuntimeError):
    """The cooling-schedule search cannot advance past the current anchor."""


class ConfigError(ValueError):
    """A run configuration is missing or inconsistent."""


class NumericalError(RuntimeError):
    """A linear solve or other numerical routine produced non-finite values."""
