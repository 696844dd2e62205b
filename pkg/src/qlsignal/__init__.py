"""Queue-length adaptive actuated signal control on a point-queue simulator."""

from .core import (
    ActuatedParams, AdaptiveParams, DemandInterval, DemandProfile, ScenarioConfig, UpstreamSignal,
    derive_replication_seed, load_scenario, save_scenario,
)
from .errors import (
    InsufficientDataError, OversaturationError, QLSignalError, ScenarioParseError, SchemaError,
    UndefinedInputError, ValidationError,
)

__version__ = "0.1.0"
