"""Exception hierarchy shared by every subsystem.

Exit codes follow the CLI contract: 1 config, 2 data, 3 anything else.
"""


class FedforgetError(Exception):
    exit_code = 3


class ConfigError(FedforgetError):
    """Invalid configuration value or malformed config file."""

    exit_code = 1


class PlanError(ConfigError):
    """Unlearning plan inconsistent with the model it targets."""


class DataError(FedforgetError):
    """Problem with dataset contents."""

    exit_code = 2


class IngestError(DataError):
    """Dataset file cannot be decoded."""


class PartitionError(DataError):
    """Dataset cannot be split as requested."""


class MetricError(DataError):
    """Metric undefined for the given inputs (e.g. empty member set)."""


class CheckpointError(DataError):
    """Checkpoint file corrupt, truncated or of an unknown version."""


class WireError(DataError):
    """Network payload malformed or truncated."""


class ShapeError(FedforgetError):
    """Tensor shapes inconsistent with the model architecture."""


class AggregationError(FedforgetError):
    """Client updates disagree on the declared channel set."""
