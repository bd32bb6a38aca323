"""Shared exception types, mapped to CLI exit codes in cli.main."""


class UsageError(ValueError):
    """API misuse: bad argument values, wrong call sequence."""


class ConfigError(UsageError):
    """Invalid configuration value; message names the offending key."""


class ShapeError(UsageError):
    """Incompatible tensor shapes; message carries both shapes."""


class DataError(ValueError):
    """Malformed or out-of-contract input data."""


class UndefinedMetricError(DataError):
    """Metric has no defined value for this input (e.g. single-class labels)."""


class CheckpointError(DataError):
    """Checkpoint file cannot be loaded."""


class UnsupportedVersionError(CheckpointError):
    """Checkpoint format version is not supported by this build."""


class ChecksumError(CheckpointError):
    """Checkpoint payload does not match its embedded checksum."""


class TruncatedFileError(CheckpointError):
    """Checkpoint file ends before the declared payload does."""


class TrainingDiverged(RuntimeError):
    """Training loss became non-finite; aborted with diagnostics."""
