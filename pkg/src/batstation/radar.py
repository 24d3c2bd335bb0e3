"""CBRS radar pulse generation and imprinting onto resource grids."""
from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ChecksumError, ConfigError, DataError, PlacementError, UnsupportedKindError
from .grid import DEFAULT_NUMEROLOGY, GridRole, NumerologyConfig, ResourceGrid


class WaveformKind(str, Enum):
    TONE = "tone"
    CHIRP = "chirp"


class ChirpDirection(str, Enum):
    UP = "up"
    DOWN = "down"
    NONE = "none"


TYPE_NAMES = {1: "P0N#1", 2: "P0N#2", 3: "Q3N#1", 4: "Q3N#2", 5: "Q3N#3"}
TYPE_IDS = tuple(TYPE_NAMES)


@dataclass(frozen=True)
class RadarTypeParams:
    """Parameter ranges of one radar type.

    ``fixed_center`` marks the wideband types whose centre frequency is pinned
    to the channel centre so the pulse stays inside the band.
    """

    type_id: int
    waveform_kind: WaveformKind
    duration_range_s: tuple[float, float]
    bandwidth_range_hz: tuple[float, float]
    inter_pulse_interval_range_s: tuple[float, float] = (0.33e-3, 3.33e-3)
    fixed_center: bool = False

    def __post_init__(self):
        object.__setattr__(self, "waveform_kind", WaveformKind(self.waveform_kind))
        for name in ("duration_range_s", "bandwidth_range_hz", "inter_pulse_interval_range_s"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ConfigError(f"{name} must satisfy 0 < min <= max")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.inter_pulse_interval_range_s[0] < 0.33e-3:
            raise ConfigError("inter-pulse interval below 0.33 ms would allow several pulses per slot")

    @property
    def name(self) -> str:
        return TYPE_NAMES.get(self.type_id, f"type{self.type_id}")

    @property
    def chirp_directions(self) -> tuple[ChirpDirection, ...]:
        if self.waveform_kind is WaveformKind.TONE:
            return (ChirpDirection.NONE,)
        return (ChirpDirection.UP, ChirpDirection.DOWN)

    @property
    def channels(self) -> int:
        return len(self.chirp_directions)

    def check_fits(self, config: NumerologyConfig) -> None:
        if self.duration_range_s[1] >= config.slot_span_s:
            raise ConfigError(f"{self.name}: maximum duration does not fit in a slot")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["waveform_kind"] = self.waveform_kind.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RadarTypeParams":
        return cls(int(d["type_id"]), d["waveform_kind"], tuple(d["duration_range_s"]),
                   tuple(d["bandwidth_range_hz"]),
                   tuple(d.get("inter_pulse_interval_range_s", (0.33e-3, 3.33e-3))),
                   bool(d.get("fixed_center", False)))


DEFAULT_RADAR_TYPES: dict[int, RadarTypeParams] = {
    1: RadarTypeParams(1, WaveformKind.TONE, (0.5e-6, 2.5e-6), (1e6, 1e6)),
    2: RadarTypeParams(2, WaveformKind.TONE, (15e-6, 25e-6), (1e6, 1e6)),
    3: RadarTypeParams(3, WaveformKind.CHIRP, (3e-6, 5e-6), (50e6, 100e6), fixed_center=True),
    4: RadarTypeParams(4, WaveformKind.CHIRP, (10e-6, 30e-6), (1e6, 10e6)),
    5: RadarTypeParams(5, WaveformKind.CHIRP, (50e-6, 100e-6), (50e6, 100e6), fixed_center=True),
}


@dataclass(frozen=True, eq=False)
class RadarPulse:
    """One radar pulse: unit-amplitude baseband IQ plus placement labels.

    ``iq`` is sampled at ``sample_rate_hz`` and centred at 0 Hz; the centre
    offset, start time and SNR are applied by :func:`imprint_pulse`.
    """

    iq: np.ndarray
    type_id: int
    duration_s: float
    bandwidth_hz: float
    chirp_direction: ChirpDirection
    sample_rate_hz: float
    center_freq_offset_hz: float = 0.0
    start_time_s: float = 0.0
    snr_db: float = float("nan")
    waveform_id: int = -1

    def __post_init__(self):
        object.__setattr__(self, "chirp_direction", ChirpDirection(self.chirp_direction))
        iq = np.asarray(self.iq, dtype=np.complex128)
        iq.setflags(write=False)
        object.__setattr__(self, "iq", iq)

    @property
    def kind(self) -> WaveformKind:
        return WaveformKind.TONE if self.chirp_direction is ChirpDirection.NONE else WaveformKind.CHIRP

    def placed(self, center_freq_offset_hz: float, start_time_s: float, snr_db: float) -> "RadarPulse":
        return replace(self, center_freq_offset_hz=float(center_freq_offset_hz),
                       start_time_s=float(start_time_s), snr_db=float(snr_db))

    def meta(self) -> dict:
        return {"type_id": self.type_id, "duration_s": self.duration_s, "bandwidth_hz": self.bandwidth_hz,
                "chirp_direction": self.chirp_direction.value, "sample_rate_hz": self.sample_rate_hz,
                "waveform_id": self.waveform_id}


@dataclass(frozen=True)
class RadarLabels:
    detected: int
    type_id: int | None = None
    freq_hz: float | None = None
    time_s: float | None = None
    snr_db: float | None = None
    chirp_direction: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RadarLabels":
        return cls(**{k: d.get(k) for k in cls.__dataclass_fields__})


NO_RADAR = RadarLabels(0)


def pulse_sample_rate(config: NumerologyConfig) -> float:
    """Sample rate at which one OFDM symbol spans exactly ``fft_size`` samples."""
    fs = config.fft_size * config.subcarrier_spacing_hz
    if not np.isclose(fs, config.sample_rate_hz, rtol=1e-9):
        raise ConfigError("sample_rate_hz must equal fft_size * subcarrier_spacing_hz")
    return fs


def lfm_iq(duration_s: float, bandwidth_hz: float, sample_rate_hz: float,
           direction: ChirpDirection | str = ChirpDirection.UP) -> np.ndarray:
    """Unit-amplitude baseband linear-FM pulse sweeping -B/2..B/2 (or reversed)."""
    n = max(1, int(round(duration_s * sample_rate_hz)))
    t = np.arange(n) / sample_rate_hz
    slope = bandwidth_hz / duration_s
    if ChirpDirection(direction) is ChirpDirection.UP:
        phase = 2 * np.pi * (-bandwidth_hz / 2 * t + slope / 2 * t ** 2)
    else:
        phase = 2 * np.pi * (bandwidth_hz / 2 * t - slope / 2 * t ** 2)
    return np.exp(1j * phase)


def gen_pulse(type_id: int, rng_seed, types: dict[int, RadarTypeParams] | None = None,
              config: NumerologyConfig = DEFAULT_NUMEROLOGY, waveform_id: int = -1) -> RadarPulse:
    """Draw one pulse of ``type_id`` with uniformly random duration/bandwidth/direction."""
    types = DEFAULT_RADAR_TYPES if types is None else types
    if type_id not in types:
        raise ConfigError(f"unknown radar type {type_id}")
    p = types[type_id]
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    fs = pulse_sample_rate(config)
    duration = float(rng.uniform(*p.duration_range_s))
    bandwidth = float(rng.uniform(*p.bandwidth_range_hz))
    if p.waveform_kind is WaveformKind.TONE:
        direction = ChirpDirection.NONE
        iq = np.ones(max(1, int(round(duration * fs))), dtype=np.complex128)
    else:
        direction = ChirpDirection.UP if rng.random() < 0.5 else ChirpDirection.DOWN
        iq = lfm_iq(duration, bandwidth, fs, direction)
    return RadarPulse(iq, type_id, duration, bandwidth, direction, fs, waveform_id=waveform_id)


def chirp_instantaneous_freq(pulse: RadarPulse, t) -> np.ndarray:
    """Instantaneous frequency (Hz, channel-centred) of a chirp at time ``t`` into the pulse."""
    if pulse.kind is not WaveformKind.CHIRP:
        raise UnsupportedKindError("instantaneous frequency is defined for chirp pulses only")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > pulse.duration_s * (1 + 1e-12)):
        raise ValueError("t must lie within the pulse duration")
    c, b, d = pulse.center_freq_offset_hz, pulse.bandwidth_hz, pulse.duration_s
    if pulse.chirp_direction is ChirpDirection.UP:
        return c - b / 2 + b * t / d
    return c + b / 2 - b * t / d


def pulse_amplitude(snr_db: float, bandwidth_hz: float, noise_psd: float, sample_rate_hz: float) -> float:
    """Envelope amplitude giving PSD ratio ``snr_db`` inside the occupied band.

    A unit-variance-per-element grid corresponds to time-domain noise of
    variance ``noise_psd`` at ``sample_rate_hz`` (unitary FFT), so the noise
    PSD is ``noise_psd / fs`` and a pulse of power ``A^2`` spread over ``B``
    has PSD ``A^2 / B``.
    """
    if np.isneginf(snr_db):
        return 0.0
    return float(np.sqrt(10.0 ** (snr_db / 10.0) * noise_psd * bandwidth_hz / sample_rate_hz))


def render_pulse(pulse: RadarPulse, config: NumerologyConfig = DEFAULT_NUMEROLOGY, noise_psd: float = 1.0,
                 allow_truncation: bool = False, types: dict[int, RadarTypeParams] | None = None):
    """Frequency-domain contribution of ``pulse`` to the grid.

    Returns ``(block, m0)`` where ``block`` holds the columns ``m0 .. m0 +
    block.shape[1] - 1``. Each OFDM symbol is a rectangular ``fft_size``
    window transformed with a unitary FFT, as a BS front end would.
    """
    types = DEFAULT_RADAR_TYPES if types is None else types
    fs = pulse_sample_rate(config)
    nfft = config.fft_size
    half_bw = config.bandwidth_hz / 2
    p = types.get(pulse.type_id)
    if p is not None and not p.fixed_center:
        if abs(pulse.center_freq_offset_hz) + pulse.bandwidth_hz / 2 > half_bw:
            raise PlacementError("narrowband pulse extends beyond the channel edge")
    total = config.symbols_per_slot * nfft
    s0 = int(round(pulse.start_time_s * fs))
    if s0 < 0 or s0 >= total:
        raise PlacementError("pulse start lies outside the slot")
    iq = pulse.iq
    if s0 + len(iq) > total:
        if not allow_truncation:
            raise PlacementError("pulse extends beyond the end of the slot")
        iq = iq[:total - s0]
    amp = pulse_amplitude(pulse.snr_db, pulse.bandwidth_hz, noise_psd, fs)
    k = np.arange(s0, s0 + len(iq))
    sig = amp * iq * np.exp(2j * np.pi * pulse.center_freq_offset_hz * k / fs)
    m0, m1 = s0 // nfft, (s0 + len(iq) - 1) // nfft
    buf = np.zeros((m1 - m0 + 1) * nfft, dtype=np.complex128)
    buf[s0 - m0 * nfft:s0 - m0 * nfft + len(iq)] = sig
    spec = np.fft.fft(buf.reshape(-1, nfft), axis=1) / np.sqrt(nfft)
    n = config.active_subcarriers
    bins = (np.arange(n) - n // 2) % nfft
    return spec[:, bins].T, m0


def imprint_pulse(grid: ResourceGrid, pulse: RadarPulse, noise_psd: float = 1.0, allow_truncation: bool = False,
                  types: dict[int, RadarTypeParams] | None = None) -> tuple[ResourceGrid, RadarLabels]:
    """Add the placed pulse to ``grid``; returns the raw grid and ground-truth labels."""
    block, m0 = render_pulse(pulse, grid.config, noise_psd, allow_truncation, types)
    out = np.array(grid.data)
    out[:, m0:m0 + block.shape[1]] += block
    labels = RadarLabels(1, pulse.type_id, pulse.center_freq_offset_hz, pulse.start_time_s, pulse.snr_db,
                         pulse.chirp_direction.value)
    return ResourceGrid(out, grid.config, GridRole.RAW), labels


def radar_only_grid(pulse: RadarPulse, config: NumerologyConfig = DEFAULT_NUMEROLOGY, noise_psd: float = 1.0,
                    types: dict[int, RadarTypeParams] | None = None) -> ResourceGrid:
    g, _ = imprint_pulse(ResourceGrid.zeros(config), pulse, noise_psd, types=types)
    return g.with_data(g.data, GridRole.RADAR_ONLY)


# -- pulse library ------------------------------------------------------------

LIBRARY_VERSION = 1


def generate_library(per_type: int, seed: int, types: dict[int, RadarTypeParams] | None = None,
                     config: NumerologyConfig = DEFAULT_NUMEROLOGY) -> list[RadarPulse]:
    """``per_type`` pulses of every type, each from its own spawned generator."""
    types = DEFAULT_RADAR_TYPES if types is None else types
    pulses = []
    root = np.random.SeedSequence(seed)
    for type_id, child in zip(sorted(types), root.spawn(len(types))):
        for i, ss in enumerate(child.spawn(per_type)):
            pulses.append(gen_pulse(type_id, np.random.default_rng(ss), types, config, waveform_id=i))
    return pulses


def split_library(pulses: Sequence[RadarPulse], seed: int, train_fraction: float = 0.9):
    """Split 9:1 per type by waveform (not by grid)."""
    rng = np.random.default_rng([seed, 0x5350])
    train, test = [], []
    for type_id in sorted({p.type_id for p in pulses}):
        group = [p for p in pulses if p.type_id == type_id]
        order = rng.permutation(len(group))
        cut = int(round(train_fraction * len(group)))
        train += [group[i] for i in sorted(order[:cut])]
        test += [group[i] for i in sorted(order[cut:])]
    return train, test


def save_library(pulses: Sequence[RadarPulse], directory, extra: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    records, offset = [], 0
    with open(directory / "pulses.iq", "wb") as fh:
        for p in pulses:
            blob = np.asarray(p.iq, dtype="<c8").tobytes()
            fh.write(blob)
            records.append({**p.meta(), "offset": offset, "count": len(p.iq), "crc32": zlib.crc32(blob)})
            offset += len(blob)
    manifest = {"format": "batstation-pulses", "version": LIBRARY_VERSION, "blob": "pulses.iq",
                "pulses": records, **(extra or {})}
    path = directory / "pulses.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path


def load_library(path) -> list[RadarPulse]:
    path = Path(path)
    if path.is_dir():
        path = path / "pulses.json"
    try:
        manifest = json.loads(path.read_text())
        raw = (path.parent / manifest["blob"]).read_bytes()
    except (KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"malformed pulse manifest: {exc}") from exc
    if manifest.get("version") != LIBRARY_VERSION:
        raise DataError(f"unsupported pulse library version {manifest.get('version')}")
    out = []
    for r in manifest["pulses"]:
        blob = raw[r["offset"]:r["offset"] + 8 * r["count"]]
        if len(blob) != 8 * r["count"]:
            raise DataError("truncated pulse blob")
        if zlib.crc32(blob) != r["crc32"]:
            raise ChecksumError(f"checksum mismatch for pulse {r['type_id']}/{r['waveform_id']}")
        iq = np.frombuffer(blob, dtype="<c8").astype(np.complex128)
        out.append(RadarPulse(iq, r["type_id"], r["duration_s"], r["bandwidth_hz"], r["chirp_direction"],
                              r["sample_rate_hz"], waveform_id=r["waveform_id"]))
    return out


def types_to_dict(types: dict[int, RadarTypeParams]) -> list[dict]:
    return [types[k].to_dict() for k in sorted(types)]


def types_from_dicts(items: Sequence[dict]) -> dict[int, RadarTypeParams]:
    types = {}
    for d in items:
        p = RadarTypeParams.from_dict(d)
        types[p.type_id] = p
    return types

