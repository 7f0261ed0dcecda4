"""Exception types shared across the toolkit."""


class PromptsegError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatchError(PromptsegError):
    """Two rasters that must share a shape do not."""


class EmptyMaskError(PromptsegError):
    """An operation received an empty mask where foreground is required."""


class UndefinedMetricError(PromptsegError):
    """A metric is mathematically undefined on this input (e.g. single-class
    labels for AUROC). Callers report these explicitly instead of skipping."""


class DatasetError(PromptsegError):
    """Dataset layout or decoding problem."""


class ConfigError(PromptsegError):
    """Invalid configuration value or file."""


class ProtocolError(PromptsegError):
    """Malformed or schema-violating wire message."""


class CapabilityError(PromptsegError):
    """Request uses a capability the segmenter did not declare."""


class TransportError(PromptsegError):
    """Segmenter transport failed (after the configured retry)."""
