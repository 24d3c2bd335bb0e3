"""Trade frequency resolution for time resolution, then max-pool subcarriers.

Each residual OFDM symbol is taken back to time samples with an ``N``-point
inverse FFT (scaled by ``1/N``), cut into ``alpha`` equal segments and each
segment is re-transformed with an unscaled ``N/alpha``-point FFT. Under this
convention ``||Y_fft||^2 = ||Y_res||^2 / alpha``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from . import _kernels
from .errors import ConfigError
from .grid import DEFAULT_NUMEROLOGY, NumerologyConfig, ResourceGrid, as_array

DEFAULT_POOL_SIZES = {1: 3, 2: 3, 3: 13, 4: 3, 5: 13}


@dataclass(frozen=True)
class ReshapeConfig:
    alpha: int = 4
    pool_sizes: dict = field(default_factory=lambda: dict(DEFAULT_POOL_SIZES))
    numerology: NumerologyConfig = DEFAULT_NUMEROLOGY

    def __post_init__(self):
        if self.alpha < 1 or self.numerology.active_subcarriers % self.alpha:
            raise ConfigError(
                f"alpha={self.alpha} must divide {self.numerology.active_subcarriers} active subcarriers")
        pools = {int(k): int(v) for k, v in self.pool_sizes.items()}
        if any(v < 1 for v in pools.values()):
            raise ConfigError("pool sizes must be positive")
        object.__setattr__(self, "pool_sizes", pools)

    def __hash__(self):
        return hash((self.alpha, tuple(sorted(self.pool_sizes.items())), self.numerology))

    @property
    def type_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.pool_sizes))

    @property
    def fft_rows(self) -> int:
        return self.numerology.active_subcarriers // self.alpha

    @property
    def time_bins(self) -> int:
        return self.alpha * self.numerology.symbols_per_slot

    @property
    def time_resolution_s(self) -> float:
        """Re-FFT symbol duration ``T_sym / alpha``."""
        return self.numerology.symbol_duration_s / self.alpha

    def pool_size(self, type_id: int) -> int:
        try:
            return self.pool_sizes[type_id]
        except KeyError:
            raise ConfigError(f"no pool size configured for radar type {type_id}") from None

    def freq_resolution_hz(self, type_id: int) -> float:
        """Pooled bin width ``alpha * P * delta_f``."""
        return self.alpha * self.pool_size(type_id) * self.numerology.subcarrier_spacing_hz

    def pooled_rows(self, type_id: int) -> int:
        return -(-self.fft_rows // self.pool_size(type_id))

    def pooled_shape(self, type_id: int) -> tuple[int, int]:
        return (self.pooled_rows(type_id), self.time_bins)

    def freq_to_row(self, type_id: int, freq_hz: float) -> int:
        """Pooled row whose block contains ``freq_hz`` (channel-centred)."""
        sc = self.numerology.frequency_to_subcarrier(freq_hz)
        k = int(np.clip(np.floor(sc / self.alpha + 0.5), 0, self.fft_rows - 1))
        return k // self.pool_size(type_id)

    def row_to_freq(self, type_id: int, row) -> np.ndarray:
        """Channel-centred frequency of the centre of pooled row ``row``."""
        p = self.pool_size(type_id)
        lo = np.asarray(row, dtype=float) * p
        hi = np.minimum(lo + p, self.fft_rows) - 1
        return self.numerology.subcarrier_frequency(self.alpha * (lo + hi) / 2)

    def time_to_col(self, t_s: float) -> int:
        return int(np.clip(np.floor(t_s / self.time_resolution_s + 1e-9), 0, self.time_bins - 1))

    def col_to_time(self, col) -> np.ndarray:
        return np.asarray(col, dtype=float) * self.time_resolution_s

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "pool_sizes": {str(k): v for k, v in sorted(self.pool_sizes.items())}}

    @classmethod
    def from_dict(cls, d: dict, numerology: NumerologyConfig = DEFAULT_NUMEROLOGY) -> "ReshapeConfig":
        pools = {int(k): int(v) for k, v in d.get("pool_sizes", DEFAULT_POOL_SIZES).items()}
        return cls(int(d.get("alpha", 4)), pools, numerology)


@dataclass(frozen=True, eq=False)
class PooledGrid:
    amp: np.ndarray
    type_id: int
    config: ReshapeConfig

    def __post_init__(self):
        amp = np.asarray(self.amp, dtype=np.float64)
        if amp.shape != self.config.pooled_shape(self.type_id):
            raise ConfigError(f"pooled grid shape {amp.shape} != {self.config.pooled_shape(self.type_id)}")
        amp.setflags(write=False)
        object.__setattr__(self, "amp", amp)


def _refft_symbol_major(y: np.ndarray, alpha: int) -> np.ndarray:
    """Re-FFT laid out as ``(alpha*M, N/alpha)``: row ``m*alpha + q``, column ``k``."""
    n, m = y.shape
    if alpha < 1 or n % alpha:
        raise ConfigError(f"alpha={alpha} does not divide N={n}")
    seg = n // alpha
    # Work symbol-major so both transforms run along contiguous memory.
    t = sfft.ifft(np.ascontiguousarray(y.T), axis=1)
    return sfft.fft(t.reshape(m * alpha, seg), axis=1)


def refft(y_res: ResourceGrid | np.ndarray, alpha: int) -> np.ndarray:
    """Re-FFT an N x M grid into (N/alpha) x (alpha*M); column ``m*alpha + q`` is segment ``q`` of symbol ``m``."""
    return np.ascontiguousarray(_refft_symbol_major(as_array(y_res), alpha).T)


def pool_subcarriers(y_fft: np.ndarray, type_id: int, config: ReshapeConfig) -> PooledGrid:
    """Max of ``|Y_fft|`` over every ``P`` adjacent rows."""
    return PooledGrid(_pool_magnitude(np.abs(y_fft), config.pool_size(type_id)), type_id, config)


def _pool_magnitude(mag: np.ndarray, pool: int) -> np.ndarray:
    if pool == 1:
        return np.array(mag, dtype=np.float64)
    return _kernels.maxpool_rows(np.ascontiguousarray(mag), pool)


def reshape_all(y_res: ResourceGrid | np.ndarray, config: ReshapeConfig) -> dict[int, PooledGrid]:
    """One pooled grid per radar type, sharing the re-FFT and identical pool sizes."""
    mag = np.ascontiguousarray(np.abs(_refft_symbol_major(as_array(y_res), config.alpha)).T)
    by_pool: dict[int, np.ndarray] = {}
    out = {}
    for r in config.type_ids:
        p = config.pool_size(r)
        if p not in by_pool:
            by_pool[p] = _pool_magnitude(mag, p)
        out[r] = PooledGrid(by_pool[p], r, config)
    return out
