class DimensionError(ValueError):
    """An input's spatial or channel size is incompatible with the layer."""


class ConfigurationError(ValueError):
    """A network, loss, or framework was configured inconsistently."""


class StructureError(ValueError):
    """Two parameter sets that must match do not (names or shapes differ)."""


class TrainingAborted(RuntimeError):
    """Raised when the optimisation loop hits a non-finite loss or gradient."""

    def __init__(self, message, iteration=None, breakdown=None):
        super().__init__(message)
        self.iteration = iteration
        self.breakdown = breakdown
