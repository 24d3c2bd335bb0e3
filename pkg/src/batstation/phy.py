"""Clean 5G uplink slot generation at the resource-grid level."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .errors import ConfigError, DataError
from .grid import (DEFAULT_NUMEROLOGY, ComplexVectorSymbol, GridRole, NumerologyConfig, ResourceGrid,
                   SymbolKind)


class Modulation(str, Enum):
    QPSK = "QPSK"
    QAM16 = "QAM16"
    QAM64 = "QAM64"


class TrafficProfile(str, Enum):
    PUCCH_LIKE = "pucch_like"
    PUSCH_LIKE = "pusch_like"


_ORDER = {Modulation.QPSK: 4, Modulation.QAM16: 16, Modulation.QAM64: 64}


@dataclass(frozen=True, eq=False)
class Constellation:
    """Square QAM constellation with unit average power.

    Points are ordered I-major over ascending levels, i.e. index
    ``i * L + q`` holds ``levels[i] + 1j * levels[q]``. Rounding ties go to
    the lowest index.
    """

    order: Modulation
    points: np.ndarray
    levels: np.ndarray

    @classmethod
    def of(cls, order: Modulation | str) -> "Constellation":
        return _constellation(Modulation(order))

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def min_distance(self) -> float:
        return float(self.levels[1] - self.levels[0])


@lru_cache(maxsize=None)
def _constellation(order: Modulation) -> Constellation:
    side = int(round(np.sqrt(_ORDER[order])))
    raw = np.arange(-(side - 1), side, 2, dtype=float)
    scale = np.sqrt(2.0 * np.mean(raw ** 2))
    levels = raw / scale
    points = (levels[:, None] + 1j * levels[None, :]).ravel()
    points.setflags(write=False)
    levels.setflags(write=False)
    return Constellation(order, points, levels)


@dataclass(frozen=True)
class UplinkAllocation:
    subcarrier_start: int
    subcarrier_count: int
    traffic_profile: TrafficProfile = TrafficProfile.PUSCH_LIKE
    modulation: Modulation | None = None
    config: NumerologyConfig = DEFAULT_NUMEROLOGY

    def __post_init__(self):
        object.__setattr__(self, "traffic_profile", TrafficProfile(self.traffic_profile))
        if self.modulation is None:
            default = Modulation.QPSK if self.traffic_profile is TrafficProfile.PUCCH_LIKE else Modulation.QAM16
            object.__setattr__(self, "modulation", default)
        object.__setattr__(self, "modulation", Modulation(self.modulation))
        n = self.config.active_subcarriers
        if self.subcarrier_start < 0 or self.subcarrier_count < 0 or self.subcarrier_start + self.subcarrier_count > n:
            raise ConfigError("allocation exceeds the active subcarriers")
        if self.subcarrier_count == 0:
            return  # empty allocation, used by tests
        if self.traffic_profile is TrafficProfile.PUCCH_LIKE and self.subcarrier_count > 0.05 * n:
            raise ConfigError("pucch_like allocations may use at most 5% of the subcarriers")
        if self.traffic_profile is TrafficProfile.PUSCH_LIKE and self.subcarrier_count < 0.5 * n:
            raise ConfigError("pusch_like allocations need at least 50% of the subcarriers")

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.config.active_subcarriers, dtype=bool)
        m[self.subcarrier_start:self.subcarrier_start + self.subcarrier_count] = True
        return m

    @property
    def constellation(self) -> Constellation:
        return Constellation.of(self.modulation)

    def to_dict(self) -> dict:
        return {"subcarrier_start": self.subcarrier_start, "subcarrier_count": self.subcarrier_count,
                "traffic_profile": self.traffic_profile.value, "modulation": self.modulation.value}

    @classmethod
    def from_dict(cls, d: dict, config: NumerologyConfig = DEFAULT_NUMEROLOGY) -> "UplinkAllocation":
        return cls(int(d["subcarrier_start"]), int(d["subcarrier_count"]), d["traffic_profile"],
                   d.get("modulation"), config)


def random_allocation(rng: np.random.Generator, profile: TrafficProfile | str,
                      config: NumerologyConfig = DEFAULT_NUMEROLOGY,
                      modulation: Modulation | str | None = None) -> UplinkAllocation:
    """Draw a contiguous allocation whose width is legal for ``profile``."""
    profile = TrafficProfile(profile)
    n = config.active_subcarriers
    if profile is TrafficProfile.PUCCH_LIKE:
        count = int(rng.integers(12, int(0.05 * n) + 1))
    else:
        count = int(rng.integers(int(np.ceil(0.5 * n)), n + 1))
    start = int(rng.integers(0, n - count + 1))
    return UplinkAllocation(start, count, profile, modulation, config)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """Per-subcarrier complex gain plus per-element noise variance."""

    h: np.ndarray
    noise_psd: float

    def __post_init__(self):
        h = np.asarray(self.h, dtype=np.complex128)
        if not np.all(np.isfinite(h)) or not np.isfinite(self.noise_psd) or self.noise_psd < 0:
            raise ConfigError("channel entries must be finite and noise_psd non-negative")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    def check_allocation(self, alloc: UplinkAllocation) -> None:
        if np.any(np.abs(self.h[alloc.mask]) == 0):
            raise ConfigError("channel gain is zero on an allocated subcarrier")

    @classmethod
    def flat(cls, gain: complex, noise_psd: float, config: NumerologyConfig = DEFAULT_NUMEROLOGY):
        return cls(np.full(config.active_subcarriers, complex(gain)), noise_psd)


def flat_channel_for_inr(rng: np.random.Generator, inr_db: float, noise_psd: float = 1.0,
                         config: NumerologyConfig = DEFAULT_NUMEROLOGY) -> ChannelRealization:
    """Flat channel ``g e^{j phi}`` whose received 5G power sits ``inr_db`` above the noise.

    With unit-power constellations the INR is ``g^2 / noise_psd``; the phase is
    uniform on [-pi, pi).
    """
    g = np.sqrt(noise_psd * 10.0 ** (inr_db / 10.0))
    phi = rng.uniform(-np.pi, np.pi)
    return ChannelRealization.flat(g * np.exp(1j * phi), noise_psd, config)


def make_dmrs_sequence(seed: int, alloc: UplinkAllocation, symbol_index: int | None = None) -> ComplexVectorSymbol:
    """Seeded QPSK reference sequence on the allocated subcarriers, zero elsewhere."""
    config = alloc.config
    rng = np.random.default_rng([int(seed), 0x444D5253])
    qpsk = Constellation.of(Modulation.QPSK).points
    x = np.zeros(config.active_subcarriers, dtype=np.complex128)
    x[alloc.subcarrier_start:alloc.subcarrier_start + alloc.subcarrier_count] = qpsk[
        rng.integers(0, 4, alloc.subcarrier_count)]
    idx = config.dmrs_symbol_indices[0] if symbol_index is None else symbol_index
    return ComplexVectorSymbol(x, idx, SymbolKind.DMRS, config)


def modulate_slot(payload_seed: int, alloc: UplinkAllocation, config: NumerologyConfig | None = None,
                  dmrs_seed: int = 0) -> ResourceGrid:
    """Transmitted grid X_5G: random data symbols plus DMRS columns."""
    config = alloc.config if config is None else config
    rng = np.random.default_rng(payload_seed)
    points = alloc.constellation.points
    x = np.zeros(config.shape, dtype=np.complex128)
    sl = slice(alloc.subcarrier_start, alloc.subcarrier_start + alloc.subcarrier_count)
    data_cols = [m for m in range(config.symbols_per_slot) if m not in config.dmrs_symbol_indices]
    x[sl, data_cols] = points[rng.integers(0, len(points), (alloc.subcarrier_count, len(data_cols)))]
    dmrs = make_dmrs_sequence(dmrs_seed, alloc).data
    for m in config.dmrs_symbol_indices:
        x[:, m] = dmrs
    return ResourceGrid(x, config, GridRole.CLEAN_5G)


def apply_channel(grid: ResourceGrid, chan: ChannelRealization, noise_seed: int | None = None) -> ResourceGrid:
    """``y[n, m] = h[n] x[n, m] + w[n, m]`` with circular Gaussian ``w``."""
    if chan.h.shape != (grid.shape[0],):
        raise ConfigError("channel length does not match the grid")
    y = chan.h[:, None] * grid.data
    if chan.noise_psd > 0:
        y = y + complex_noise(np.random.default_rng(noise_seed), grid.shape, chan.noise_psd)
    return grid.with_data(y, GridRole.RAW)


def complex_noise(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    w = rng.standard_normal((2,) + tuple(shape))
    return np.sqrt(variance / 2.0) * (w[0] + 1j * w[1])


def measure_inr(grid_5g_only: ResourceGrid | np.ndarray, noise_psd: float, mask: np.ndarray | None = None) -> float:
    """INR in dB of the 5G-only grid over its allocated resource elements.

    ``mask`` selects the allocated elements (rows, or full grid shape); by
    default every non-zero element counts as allocated.
    """
    if noise_psd <= 0:
        raise ConfigError("noise_psd must be positive")
    y = grid_5g_only.data if isinstance(grid_5g_only, ResourceGrid) else np.asarray(grid_5g_only)
    if mask is None:
        sel = y[y != 0]
    else:
        mask = np.asarray(mask, dtype=bool)
        sel = y[mask] if mask.shape == y.shape else y[mask, :]
    if sel.size == 0:
        raise DataError("no allocated resource elements to measure")
    return float(10.0 * np.log10(np.mean(np.abs(sel) ** 2) / noise_psd))
