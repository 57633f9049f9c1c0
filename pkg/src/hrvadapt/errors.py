"""Exception types raised across the package."""


class HrvAdaptError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(HrvAdaptError):
    """An input value violates a documented invariant."""


class ConfigError(HrvAdaptError):
    """A configuration value is unusable (bad rate, unknown variant, ...)."""


class ShapeError(HrvAdaptError):
    """Array shapes are incompatible with the requested operation."""


class DataError(HrvAdaptError):
    """A dataset cannot support the requested operation (empty, unlabelled, ...)."""


class InputError(HrvAdaptError):
    """A required model input is missing or inconsistent."""


class StateError(HrvAdaptError):
    """An operation was called out of order (e.g. backward without forward)."""


class CalibrationError(HrvAdaptError):
    """Probability calibration is not identifiable on the given data."""


class MetricError(HrvAdaptError):
    """A metric is undefined on the given prediction set."""


class PlanError(HrvAdaptError):
    """A cross-validation plan cannot be constructed."""


class ParseError(HrvAdaptError):
    """A subject record or config file is malformed."""


class ArtifactError(HrvAdaptError):
    """A model artifact file cannot be read or written."""


class VersionError(ArtifactError):
    """Artifact format version is not supported by this build."""


class CorruptionError(ArtifactError):
    """Artifact payload fails its integrity checksum."""
