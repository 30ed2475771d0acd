"""Exception hierarchy shared by every gpdenoise module."""


class GpdenoiseError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(GpdenoiseError):
    """Operands have incompatible shapes or dimensions."""


class ConfigError(GpdenoiseError):
    """A configuration value is missing, malformed, or out of range."""


class NumericError(GpdenoiseError):
    """A computation produced a non-finite value."""


class FormatError(GpdenoiseError):
    """A file does not conform to its declared format."""


class CorruptionError(FormatError):
    """A file's integrity check failed (checksum mismatch, truncation)."""


class VersionError(FormatError):
    """A file carries an unsupported format version."""
