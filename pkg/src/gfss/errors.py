"""Exception types raised by the engine."""


class GfssError(Exception):
    """Base class for all engine errors."""


class NumericInputError(GfssError):
    """Non-finite or out-of-range numeric input."""


class ShapeError(GfssError):
    """Array dimensions inconsistent with the declared layout."""


class LabelError(GfssError):
    """Label value outside the valid class range."""


class TaskError(GfssError):
    """Episode structurally invalid (empty support, missing novel class, ...)."""


class ConfigError(GfssError):
    """Invalid configuration value or unknown preset."""


class FormatError(GfssError):
    """Task file has a bad magic number or unsupported version."""


class CorruptionError(GfssError):
    """Task file sections inconsistent with the declared header."""


class MetricUndefinedError(GfssError):
    """A score group has no class with a nonzero union."""


class DivergenceError(GfssError):
    """Optimization produced a non-finite loss or gradient."""

    def __init__(self, message, iteration):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration
