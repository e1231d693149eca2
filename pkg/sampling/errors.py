class SamplingError(Exception):
    """Base error for everything raised by the assignment toolkit"""


class ConfigError(SamplingError):
    """Invalid configuration value; ``field`` names the offending setting."""

    def __init__(self, field, message):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")


class DataError(SamplingError):
    """Unreadable or inconsistent input data (annotations, detections, anchor sets)."""


class TargetError(SamplingError, ValueError):
    """Regression codec precondition violated."""
