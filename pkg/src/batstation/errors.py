"""Exception hierarchy shared by the library and the CLI."""


class BatStationError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(BatStationError, ValueError):
    """Invalid configuration, shapes or parameters."""

    exit_code = 2


class DataError(BatStationError):
    """Malformed, truncated or inconsistent data files and inputs."""

    exit_code = 3


class ChecksumError(DataError):
    pass


class MalformedReferenceError(DataError, ValueError):
    """A reference (DMRS) symbol is zero on an allocated subcarrier."""


class InsufficientDataError(DataError, ValueError):
    pass


class TrainingError(BatStationError):
    """Template fine-tuning diverged."""

    exit_code = 4

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class UnsupportedKindError(BatStationError, TypeError):
    pass


class PlacementError(ConfigError):
    """A radar pulse cannot be placed inside the channel or slot."""
