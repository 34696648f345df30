"""Exception hierarchy shared by every stage of the pipeline."""


class HarError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ContractError(HarError, ValueError):
    """A documented precondition was violated by the caller."""

    exit_code = 2


class DimensionError(ContractError):
    """Tensor or array shapes do not agree."""


class LabelError(ContractError):
    """A class index is outside ``[0, n_classes)``."""


class SpecError(ContractError):
    """A model specification cannot be built."""


class ConfigError(ContractError):
    """A configuration file or flag value is invalid."""


class NumericError(HarError, ArithmeticError):
    """A NaN or infinity appeared where finite values are required."""

    exit_code = 4


class DataError(HarError):
    """Input data could not be loaded or is inconsistent."""

    exit_code = 3


class LoadError(DataError):
    """A recording file could not be parsed."""


class InsufficientDataError(DataError):
    """Not enough samples to perform the operation."""


class LeakageError(DataError):
    """A subject appears in more than one split of a fold."""
