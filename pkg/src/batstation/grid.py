"""Numerology, resource-grid containers and the BATG grid file format.

All indices are zero based. The DMRS symbols that the 5G Type-1 layout
places at the 3rd, 8th and 12th OFDM symbols therefore sit at columns
2, 7 and 11.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError

LOG_FLOOR = 1e-30

GRID_MAGIC = b"BATG"
GRID_VERSION = 1
_GRID_HEADER = struct.Struct("<4sHII")


@dataclass(frozen=True)
class NumerologyConfig:
    """OFDM numerology of one uplink slot (defaults: NR numerology 1, 100 MHz)."""

    subcarrier_spacing_hz: float = 30e3
    fft_size: int = 4096
    active_subcarriers: int = 3276
    symbols_per_slot: int = 14
    slot_duration_s: float = 0.5e-3
    dmrs_symbol_indices: tuple[int, ...] = (2, 7, 11)
    sample_rate_hz: float = 122.88e6

    def __post_init__(self):
        object.__setattr__(self, "dmrs_symbol_indices", tuple(int(i) for i in self.dmrs_symbol_indices))
        if self.subcarrier_spacing_hz <= 0:
            raise ConfigError("subcarrier spacing must be positive")
        if not 0 < self.active_subcarriers <= self.fft_size:
            raise ConfigError("active_subcarriers must be in (0, fft_size]")
        if self.symbols_per_slot <= 0:
            raise ConfigError("symbols_per_slot must be positive")
        idx = self.dmrs_symbol_indices
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ConfigError("dmrs_symbol_indices must be strictly increasing")
        if idx and (idx[0] < 0 or idx[-1] >= self.symbols_per_slot):
            raise ConfigError("dmrs_symbol_indices out of range")
        if self.active_subcarriers * self.subcarrier_spacing_hz > 100e6 + self.subcarrier_spacing_hz:
            raise ConfigError("active bandwidth exceeds the 100 MHz channel bound")

    @property
    def symbol_duration_s(self) -> float:
        return 1.0 / self.subcarrier_spacing_hz

    @property
    def slot_span_s(self) -> float:
        """Duration covered by the grid columns (no cyclic prefix)."""
        return self.symbols_per_slot * self.symbol_duration_s

    @property
    def bandwidth_hz(self) -> float:
        return self.active_subcarriers * self.subcarrier_spacing_hz

    @property
    def shape(self) -> tuple[int, int]:
        return (self.active_subcarriers, self.symbols_per_slot)

    def subcarrier_frequency(self, n) -> np.ndarray:
        """Frequency offset from channel centre of subcarrier index ``n``."""
        return (np.asarray(n, dtype=float) - self.active_subcarriers // 2) * self.subcarrier_spacing_hz

    def frequency_to_subcarrier(self, f_hz) -> np.ndarray:
        return np.asarray(f_hz, dtype=float) / self.subcarrier_spacing_hz + self.active_subcarriers // 2

    def to_dict(self) -> dict:
        return {
            "subcarrier_spacing_hz": self.subcarrier_spacing_hz,
            "fft_size": self.fft_size,
            "active_subcarriers": self.active_subcarriers,
            "symbols_per_slot": self.symbols_per_slot,
            "slot_duration_s": self.slot_duration_s,
            "dmrs_symbol_indices": list(self.dmrs_symbol_indices),
            "sample_rate_hz": self.sample_rate_hz,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NumerologyConfig":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        if "dmrs_symbol_indices" in known:
            known["dmrs_symbol_indices"] = tuple(known["dmrs_symbol_indices"])
        return cls(**known)


DEFAULT_NUMEROLOGY = NumerologyConfig()


class GridRole(str, Enum):
    RAW = "raw"
    CLEAN_5G = "clean-5G"
    RECONSTRUCTED_5G = "reconstructed-5G"
    RESIDUAL = "residual"
    RADAR_ONLY = "radar-only"
    NOISE_ONLY = "noise-only"


class SymbolKind(str, Enum):
    DATA = "data"
    DMRS = "dmrs"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ResourceGrid:
    """Complex N x M grid of linear received amplitudes for one slot."""

    data: np.ndarray
    config: NumerologyConfig = DEFAULT_NUMEROLOGY
    role: GridRole = GridRole.RAW

    def __post_init__(self):
        data = np.asarray(self.data)
        if not np.iscomplexobj(data):
            data = data.astype(np.complex128)
        if data.shape != self.config.shape:
            raise ConfigError(f"grid shape {data.shape} does not match config {self.config.shape}")
        if not np.all(np.isfinite(data)):
            raise DataError("grid contains NaN or Inf")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "role", GridRole(self.role))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def with_data(self, data: np.ndarray, role: GridRole | str | None = None) -> "ResourceGrid":
        return ResourceGrid(data, self.config, self.role if role is None else GridRole(role))

    def __add__(self, other: "ResourceGrid") -> "ResourceGrid":
        return self.with_data(self.data + other.data)

    def __sub__(self, other: "ResourceGrid") -> "ResourceGrid":
        return self.with_data(self.data - other.data)

    @classmethod
    def adopt(cls, data: np.ndarray, config: NumerologyConfig = DEFAULT_NUMEROLOGY,
              role: GridRole | str = GridRole.RAW) -> "ResourceGrid":
        """Wrap a freshly built complex array without copying it.

        The caller hands ``data`` over: it is made read-only in place and must
        not be written through any other reference afterwards.
        """
        if data.shape != config.shape or not np.iscomplexobj(data):
            return cls(data, config, role)
        if not np.all(np.isfinite(data)):
            raise DataError("grid contains NaN or Inf")
        data.setflags(write=False)
        grid = object.__new__(cls)
        object.__setattr__(grid, "data", data)
        object.__setattr__(grid, "config", config)
        object.__setattr__(grid, "role", GridRole(role))
        return grid

    @classmethod
    def zeros(cls, config: NumerologyConfig = DEFAULT_NUMEROLOGY, role=GridRole.RAW) -> "ResourceGrid":
        return cls(np.zeros(config.shape, dtype=np.complex128), config, role)


@dataclass(frozen=True, eq=False)
class ComplexVectorSymbol:
    """One OFDM symbol (a grid column) in the frequency domain."""

    data: np.ndarray
    symbol_index: int = 0
    kind: SymbolKind = SymbolKind.DATA
    config: NumerologyConfig = field(default=DEFAULT_NUMEROLOGY, repr=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        if data.shape != (self.config.active_subcarriers,):
            raise ConfigError(
                f"symbol length {data.shape} does not match {self.config.active_subcarriers} subcarriers"
            )
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "kind", SymbolKind(self.kind))


def symbol_kind(config: NumerologyConfig, m: int) -> SymbolKind:
    return SymbolKind.DMRS if m in config.dmrs_symbol_indices else SymbolKind.DATA


def grid_column(grid: ResourceGrid, m: int) -> ComplexVectorSymbol:
    """Return column ``m`` of ``grid``; raises IndexError when out of range."""
    n_sym = grid.config.symbols_per_slot
    if not 0 <= m < n_sym:
        raise IndexError(f"symbol index {m} outside [0, {n_sym})")
    return ComplexVectorSymbol(grid.data[:, m], m, symbol_kind(grid.config, m), grid.config)


def assemble_grid(columns: Sequence[ComplexVectorSymbol], config: NumerologyConfig = DEFAULT_NUMEROLOGY,
                  role=GridRole.RAW) -> ResourceGrid:
    """Inverse of :func:`grid_column` applied to every symbol index."""
    if len(columns) != config.symbols_per_slot:
        raise ConfigError("need exactly one column per symbol")
    data = np.empty(config.shape, dtype=np.complex128)
    for col in sorted(columns, key=lambda c: c.symbol_index):
        data[:, col.symbol_index] = col.data
    return ResourceGrid(data, config, role)


def grid_power_db(grid: ResourceGrid | np.ndarray) -> np.ndarray:
    """Element-wise ``10 log10(|y|^2 + 1e-30)``."""
    y = grid.data if isinstance(grid, ResourceGrid) else np.asarray(grid)
    return 10.0 * np.log10(np.abs(y) ** 2 + LOG_FLOOR)


# -- BATG binary format ------------------------------------------------------

def grid_to_bytes(data: np.ndarray) -> bytes:
    """Serialise a complex N x M array (column-major float32 I/Q pairs)."""
    data = np.asarray(data)
    if data.ndim != 2:
        raise ConfigError("grid must be two dimensional")
    n, m = data.shape
    body = np.asarray(data.T, dtype="<c8").tobytes()
    return _GRID_HEADER.pack(GRID_MAGIC, GRID_VERSION, n, m) + body


def grid_from_bytes(buf: bytes) -> np.ndarray:
    if len(buf) < _GRID_HEADER.size:
        raise DataError("truncated grid header")
    magic, version, n, m = _GRID_HEADER.unpack_from(buf)
    if magic != GRID_MAGIC:
        raise DataError(f"bad grid magic {magic!r}")
    if version != GRID_VERSION:
        raise DataError(f"unsupported grid version {version}")
    expected = _GRID_HEADER.size + 8 * n * m
    if len(buf) != expected:
        raise DataError(f"grid blob has {len(buf)} bytes, expected {expected}")
    body = np.frombuffer(buf, dtype="<c8", offset=_GRID_HEADER.size, count=n * m)
    return body.reshape(m, n).T.copy()


def write_grid(path_or_file, grid: ResourceGrid | np.ndarray) -> int:
    data = grid.data if isinstance(grid, ResourceGrid) else grid
    blob = grid_to_bytes(data)
    if hasattr(path_or_file, "write"):
        path_or_file.write(blob)
    else:
        with open(path_or_file, "wb") as fh:
            fh.write(blob)
    return len(blob)


def read_grid(path_or_file: str | BinaryIO, config: NumerologyConfig | None = None) -> ResourceGrid:
    if hasattr(path_or_file, "read"):
        buf = path_or_file.read()
    else:
        with open(path_or_file, "rb") as fh:
            buf = fh.read()
    data = grid_from_bytes(buf).astype(np.complex128)
    if config is None:
        config = replace(DEFAULT_NUMEROLOGY, active_subcarriers=data.shape[0], symbols_per_slot=data.shape[1],
                         dmrs_symbol_indices=tuple(i for i in DEFAULT_NUMEROLOGY.dmrs_symbol_indices
                                                   if i < data.shape[1]))
    return ResourceGrid(data, config)


def iter_columns(grid: ResourceGrid) -> Iterable[ComplexVectorSymbol]:
    for m in range(grid.config.symbols_per_slot):
        yield grid_column(grid, m)


def as_array(obj) -> np.ndarray:
    """Underlying array of a grid or symbol; plain arrays pass through."""
    if isinstance(obj, (ResourceGrid, ComplexVectorSymbol)):
        return obj.data
    return np.asarray(obj)
