"""Exception types shared across the package."""


class NeurodxError(Exception):
    """Base class for all package errors."""


class DimensionError(NeurodxError, ValueError):
    """Tensor shapes do not conform for the requested operation."""


class ArgumentError(NeurodxError, ValueError):
    """A scalar or structural argument is out of its valid range."""


class ConfigError(NeurodxError, ValueError):
    """An inconsistent model or run configuration."""


class StructureError(NeurodxError, ValueError):
    """Dataset directory layout does not match the expected structure."""


class FormatError(NeurodxError, ValueError):
    """A serialized file is corrupt or has the wrong magic."""


class VersionError(FormatError):
    """A serialized file has an unsupported format version."""


class StateError(NeurodxError, RuntimeError):
    """An operation was called in an invalid state (e.g. missing caches)."""


class NumericError(NeurodxError, ArithmeticError):
    """A numeric failure (NaN/Inf) was detected during computation."""
