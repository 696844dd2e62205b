"""Exception hierarchy shared across the package."""


class QLSignalError(Exception):
    """Base class for every error raised by qlsignal."""


class ScenarioParseError(QLSignalError):
    """The scenario file could not be parsed."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ValidationError(QLSignalError, ValueError):
    """A value violates a documented invariant.

    ``field`` names the offending configuration key (dotted path) so the CLI
    can surface it.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class OversaturationError(QLSignalError):
    """A queue exceeded the divergence cap during simulation."""

    def __init__(self, approach, time, queue_length, cap):
        super().__init__(
            f"{approach} queue reached {queue_length} vehicles (cap {cap}) at t={time:.1f}s"
        )
        self.approach = approach
        self.time = time
        self.queue_length = queue_length
        self.cap = cap


class UndefinedInputError(QLSignalError, ValueError):
    """An estimator was evaluated where its denominator vanishes."""


class InsufficientDataError(QLSignalError):
    """Too few cycles to evaluate an estimator cell."""


class SchemaError(QLSignalError):
    """A CSV input does not match the documented schema."""

    def __init__(self, row, message):
        super().__init__(f"row {row}: {message}")
        self.row = row
