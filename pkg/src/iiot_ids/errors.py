"""Exception hierarchy shared across the package."""


class IdsError(Exception):
    """Base class for all package errors."""


class DimensionError(IdsError, ValueError):
    """Operand shapes are incompatible."""


class NumericError(IdsError, FloatingPointError):
    """A NaN or infinity appeared where finite values are required."""


class ContractError(IdsError, ValueError):
    """A precondition on arguments was violated."""


class ConfigError(IdsError, ValueError):
    """Invalid configuration (unknown variant, bad hyperparameter, ...)."""


class DataError(IdsError, ValueError):
    """Input data could not be ingested or transformed."""


class MappingError(DataError):
    """An attack-type string has no known class mapping."""


class CheckpointError(IdsError, ValueError):
    """A checkpoint file is corrupt, truncated or incompatible."""


class TrainingDiverged(IdsError, RuntimeError):
    """Loss or gradients became non-finite during training."""

    def __init__(self, message, last_good_epoch=0, history=None, state=None):
        super().__init__(message)
        self.last_good_epoch = last_good_epoch
        self.history = history
        self.state = state


class UndefinedMetricError(IdsError, ValueError):
    """A metric is mathematically undefined for the given input (e.g. AUC on one class)."""
