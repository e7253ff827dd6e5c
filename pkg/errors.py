"""
Error hierarchy for the enhancement toolkit.

Every error carries the exit code the command-line front end reports for it:

    2  I/O (missing or unreadable file)
    3  mode / state (train vs inference weights)
    4  shape, configuration or degenerate input
    5  file format (images and weight files)
"""


class UweError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class FileAccessError(UweError):
    """A file could not be opened or read."""

    exit_code = 2

    def __init__(self, path: str, reason: str = "cannot read file"):
        self.path = str(path)
        super().__init__(f"{reason}: {self.path}")


class StateError(UweError):
    """Weights are in the wrong mode for the requested operation."""

    exit_code = 3


class ShapeError(UweError):
    exit_code = 4


class ConfigurationError(UweError):
    """Channel plans, parameters or environment settings do not fit together."""

    exit_code = 4


class DegenerateInputError(UweError):
    """Input too small for the statistic or metric being computed."""

    exit_code = 4


class FormatError(UweError):
    exit_code = 5


class ImageFormatError(FormatError):
    """Malformed image file."""


class WeightFormatError(FormatError):
    """Malformed UIEW weight file."""


class BadMagicError(WeightFormatError):
    pass


class VersionMismatchError(WeightFormatError):
    pass


class TruncatedFileError(WeightFormatError):
    pass


class ManifestError(WeightFormatError):
    pass


class TensorShapeError(WeightFormatError):
    """A manifest entry disagrees with the tensor the model expects."""

    def __init__(self, name: str, message: str):
        self.tensor_name = name
        super().__init__(f"tensor '{name}': {message}")
