"""Exception hierarchy shared by the library and the CLI."""


class MambaYoloError(Exception):
    """Base class for every error raised by mambayolo."""


class ShapeError(MambaYoloError, ValueError):
    """A tensor or weight does not have the shape an operation requires."""


class InputShapeError(ShapeError):
    """Image dimensions are not compatible with the network strides."""


class DiscretizationError(MambaYoloError, ValueError):
    """Invalid continuous parameters (non-positive timestep, negative variance)."""


class TensorFormatError(MambaYoloError, ValueError):
    """A tensor dump or image file could not be decoded."""


class ConfigError(MambaYoloError, ValueError):
    """A model config file is malformed or violates a config invariant."""


class GradCheckError(MambaYoloError):
    """A gradient check hit a non-finite value."""


class UsageError(MambaYoloError):
    """Invalid command-line usage."""
