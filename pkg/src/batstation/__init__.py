"""In-situ radar sensing on 5G uplink resource grids."""
from ._kernels import BACKEND
from .errors import BatStationError, ConfigError, DataError, TrainingError
from .grid import DEFAULT_NUMEROLOGY, NumerologyConfig, ResourceGrid
from .reshape import ReshapeConfig

__version__ = "0.1.0"

__all__ = ["BACKEND", "BatStationError", "ConfigError", "DataError", "TrainingError", "DEFAULT_NUMEROLOGY",
           "NumerologyConfig", "ResourceGrid", "ReshapeConfig", "__version__"]
