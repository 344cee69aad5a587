"""Exception taxonomy shared across the toolkit.

The CLI maps these onto exit codes: configuration/usage problems exit 1,
data problems exit 2, numeric/training problems exit 3.
"""


class NearMissError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(NearMissError):
    """Invalid configuration or unusable combination of options."""


class GenerationError(ConfigError):
    """Scenario template parameters describe infeasible geometry."""


class DataError(NearMissError):
    """Input data violates a documented contract."""


class SchemaError(DataError):
    """A required column or field is missing or malformed."""


class InsufficientDataError(DataError):
    """Too few samples/frames to perform the requested operation."""


class DegenerateStartError(DataError):
    """Collision-time query starts inside the collision threshold with a
    stationary vehicle, so no meaningful time can be reported."""


class ContractError(NearMissError):
    """An API precondition was violated by the caller."""


class DimensionError(ContractError):
    """Operand shapes are incompatible."""


class NumericError(NearMissError):
    """A computation produced non-finite intermediate values."""


class TrainingError(NumericError):
    """Training produced non-finite gradients, losses, or parameters."""
