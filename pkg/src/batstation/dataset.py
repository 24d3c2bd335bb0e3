"""Synthetic labelled resource grids: generation, persistence and loading.

Every sample is a pure function of ``(seed, index, job)``, where the job says
which class, SNR and library waveform the sample uses. Generation can run on
several threads without changing a single output byte.
"""
from __future__ import annotations

import json
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import ChecksumError, ConfigError, DataError
from .grid import DEFAULT_NUMEROLOGY, NumerologyConfig, ResourceGrid, grid_from_bytes, grid_to_bytes
from .phy import TrafficProfile, UplinkAllocation, apply_channel, flat_channel_for_inr, modulate_slot, random_allocation
from .radar import (DEFAULT_RADAR_TYPES, NO_RADAR, RadarLabels, RadarPulse, RadarTypeParams, imprint_pulse,
                    types_from_dicts, types_to_dict)

DATASET_VERSION = 1
DEFAULT_SNR_DB = (10.0, 15.0, 20.0, 25.0, 30.0, 35.0)
DISCRETE_OFFSETS_HZ = (-30e6, -10e6, 10e6, 30e6)


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs of the synthetic generator.

    ``freq_mode`` is ``"uniform"`` (narrowband centres uniform over
    ``freq_range_hz``) or ``"discrete"`` (drawn from ``discrete_offsets_hz``).
    """

    numerology: NumerologyConfig = DEFAULT_NUMEROLOGY
    types: dict = field(default_factory=lambda: dict(DEFAULT_RADAR_TYPES))
    snr_db_set: tuple = DEFAULT_SNR_DB
    inr_db_range: tuple = (24.3, 38.4)
    pusch_fraction: float = 0.5
    noise_psd: float = 1.0
    freq_mode: str = "uniform"
    freq_range_hz: tuple = (-40e6, 40e6)
    discrete_offsets_hz: tuple = DISCRETE_OFFSETS_HZ

    def __post_init__(self):
        object.__setattr__(self, "snr_db_set", tuple(float(s) for s in self.snr_db_set))
        object.__setattr__(self, "inr_db_range", tuple(float(s) for s in self.inr_db_range))
        object.__setattr__(self, "freq_range_hz", tuple(float(s) for s in self.freq_range_hz))
        object.__setattr__(self, "discrete_offsets_hz", tuple(float(s) for s in self.discrete_offsets_hz))
        if not self.snr_db_set:
            raise ConfigError("snr_db_set must not be empty")
        if self.freq_mode not in ("uniform", "discrete"):
            raise ConfigError(f"unknown freq_mode {self.freq_mode!r}")
        if not 0 <= self.pusch_fraction <= 1:
            raise ConfigError("pusch_fraction must be in [0, 1]")
        if self.inr_db_range[0] > self.inr_db_range[1] or self.freq_range_hz[0] > self.freq_range_hz[1]:
            raise ConfigError("ranges must be ordered (low, high)")
        if self.noise_psd <= 0:
            raise ConfigError("noise_psd must be positive")
        for p in self.types.values():
            p.check_fits(self.numerology)

    def with_snr(self, *snr_db: float) -> "SyntheticConfig":
        from dataclasses import replace
        return replace(self, snr_db_set=tuple(snr_db))

    def to_dict(self) -> dict:
        return {"numerology": self.numerology.to_dict(), "types": types_to_dict(self.types),
                "snr_db_set": list(self.snr_db_set), "inr_db_range": list(self.inr_db_range),
                "pusch_fraction": self.pusch_fraction, "noise_psd": self.noise_psd,
                "freq_mode": self.freq_mode, "freq_range_hz": list(self.freq_range_hz),
                "discrete_offsets_hz": list(self.discrete_offsets_hz)}

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        kw = dict(d)
        if "numerology" in kw:
            kw["numerology"] = NumerologyConfig.from_dict(kw["numerology"])
        if "types" in kw:
            kw["types"] = types_from_dicts(kw["types"])
        known = cls.__dataclass_fields__
        unknown = set(kw) - set(known)
        if unknown:
            raise ConfigError(f"unknown dataset config keys: {sorted(unknown)}")
        return cls(**kw)


@dataclass(frozen=True, eq=False)
class Sample:
    grid: ResourceGrid
    labels: RadarLabels
    provenance: dict

    @property
    def allocation(self) -> UplinkAllocation:
        return UplinkAllocation.from_dict(self.provenance["alloc"], self.grid.config)

    @property
    def dmrs_seed(self) -> int:
        return int(self.provenance["dmrs_seed"])

    @property
    def index(self) -> int:
        return int(self.provenance["index"])


@dataclass(frozen=True)
class _Job:
    type_id: int  # 0 = no radar
    snr_db: float | None
    pulse: RadarPulse | None


def _quantize(data: np.ndarray) -> np.ndarray:
    """Round to complex64 so in-memory samples equal what a save/load returns."""
    return data.astype(np.complex64).astype(np.complex128)


def generate_sample(seed: int, index: int, config: SyntheticConfig, pulse: RadarPulse | None = None,
                    snr_db: float | None = None) -> Sample:
    """One labelled raw grid, fully determined by ``(seed, index)`` and the pulse."""
    ss = np.random.SeedSequence(seed, spawn_key=(index,))
    rng = np.random.default_rng(ss)
    cfg = config.numerology
    profile = TrafficProfile.PUSCH_LIKE if rng.random() < config.pusch_fraction else TrafficProfile.PUCCH_LIKE
    alloc = random_allocation(rng, profile, cfg)
    inr_db = float(rng.uniform(*config.inr_db_range))
    chan = flat_channel_for_inr(rng, inr_db, config.noise_psd, cfg)
    payload_seed, dmrs_seed, noise_seed = (int(s) for s in rng.integers(0, 2 ** 63, 3))
    x = modulate_slot(payload_seed, alloc, cfg, dmrs_seed)
    y = apply_channel(x, chan, noise_seed)
    labels = NO_RADAR
    prov = {"seed": int(seed), "index": int(index), "alloc": alloc.to_dict(), "inr_db": inr_db,
            "channel_gain": [float(chan.h[0].real), float(chan.h[0].imag)], "payload_seed": payload_seed,
            "dmrs_seed": dmrs_seed, "noise_seed": noise_seed}
    if pulse is not None:
        if snr_db is None:
            raise ConfigError("a radar sample needs an SNR")
        params = config.types[pulse.type_id]
        if params.fixed_center:
            f0 = 0.0
        elif config.freq_mode == "uniform":
            f0 = float(rng.uniform(*config.freq_range_hz))
        else:
            f0 = float(config.discrete_offsets_hz[rng.integers(len(config.discrete_offsets_hz))])
        t0 = float(rng.uniform(0.0, cfg.slot_span_s - pulse.duration_s))
        y, labels = imprint_pulse(y, pulse.placed(f0, t0, snr_db), config.noise_psd, types=config.types)
        prov["waveform_id"] = int(pulse.waveform_id)
    grid = ResourceGrid(_quantize(y.data), cfg)
    return Sample(grid, labels, prov)


def _plan(counts: Mapping[int, int], pulses: Sequence[RadarPulse] | None, config: SyntheticConfig,
          seed: int) -> list[_Job]:
    counts = {int(k): int(v) for k, v in counts.items()}
    if any(v <= 0 for v in counts.values()):
        raise ConfigError("counts must be positive")
    rng = np.random.default_rng([seed, 0x504C414E])
    jobs = [_Job(0, None, None)] * counts.get(0, 0)
    by_type: dict[int, list[RadarPulse]] = {}
    for p in pulses or ():
        by_type.setdefault(p.type_id, []).append(p)
    for r in sorted(k for k in counts if k != 0):
        if r not in config.types:
            raise ConfigError(f"unknown radar type {r}")
        pool = sorted(by_type.get(r, []), key=lambda p: p.waveform_id)
        if not pool:
            raise ConfigError(f"no library waveforms for radar type {r}")
        order: list[int] = []
        while len(order) < counts[r]:
            order.extend(rng.permutation(len(pool)).tolist())
        snrs = config.snr_db_set
        jobs += [_Job(r, snrs[i % len(snrs)], pool[order[i]]) for i in range(counts[r])]
    return [jobs[i] for i in rng.permutation(len(jobs))]


def generate_samples(config: SyntheticConfig, counts: Mapping[int, int], seed: int,
                     pulses: Sequence[RadarPulse] | None = None, threads: int = 1) -> list[Sample]:
    """Count-driven in-memory generation; key 0 of ``counts`` is the no-radar class."""
    jobs = _plan(counts, pulses, config, seed)

    def run(i):
        j = jobs[i]
        return generate_sample(seed, i, config, j.pulse, j.snr_db)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(run, range(len(jobs))))
    return [run(i) for i in range(len(jobs))]


@dataclass(frozen=True, eq=False)
class DatasetManifest:
    path: Path
    data: dict

    @property
    def split(self) -> str:
        return self.data["split"]

    @property
    def config(self) -> SyntheticConfig:
        return SyntheticConfig.from_dict(self.data["config"])

    @property
    def records(self) -> list:
        return self.data["samples"]

    def __len__(self) -> int:
        return len(self.records)

    def samples(self) -> Iterator[Sample]:
        return load(self.path)


def write_dataset(samples: Sequence[Sample], directory, split: str, config: SyntheticConfig,
                  extra: dict | None = None) -> DatasetManifest:
    """Write ``<split>.json`` plus a ``<split>.batg`` blob of concatenated grids."""
    if split not in ("train", "test", "val"):
        raise ConfigError(f"unknown split {split!r}")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    blob_name = f"{split}.batg"
    records, offset = [], 0
    with open(directory / blob_name, "wb") as fh:
        for s in samples:
            blob = grid_to_bytes(s.grid.data)
            fh.write(blob)
            records.append({"offset": offset, "nbytes": len(blob), "crc32": zlib.crc32(blob),
                            "labels": s.labels.to_dict(), "provenance": s.provenance})
            offset += len(blob)
    manifest = {"format": "batstation-dataset", "version": DATASET_VERSION, "split": split,
                "blob": blob_name, "config": config.to_dict(), "samples": records, **(extra or {})}
    path = directory / f"{split}.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True), encoding="utf-8")
    return DatasetManifest(path, manifest)


def build_synthetic(config: SyntheticConfig, counts: Mapping[int, int], seed: int,
                    pulses: Sequence[RadarPulse], directory, split: str = "test", threads: int = 1,
                    library_ref: str | None = None) -> DatasetManifest:
    """Generate and persist one split. ``pulses`` must already be that split's waveforms."""
    samples = generate_samples(config, counts, seed, pulses, threads)
    extra = {"seed": int(seed), "counts": {str(k): int(v) for k, v in sorted(counts.items())},
             "library": library_ref}
    return write_dataset(samples, directory, split, config, extra)


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed dataset manifest: {exc}") from exc
    if data.get("format") != "batstation-dataset":
        raise DataError(f"{path} is not a dataset manifest")
    if data.get("version") != DATASET_VERSION:
        raise DataError(f"unsupported dataset version {data.get('version')}")
    return DatasetManifest(path, data)


def load(manifest_path) -> Iterator[Sample]:
    """Yield the samples of a persisted split, checking every blob's CRC32."""
    man = read_manifest(manifest_path)
    numerology = NumerologyConfig.from_dict(man.data["config"]["numerology"])
    with open(man.path.parent / man.data["blob"], "rb") as fh:
        for rec in man.records:
            fh.seek(rec["offset"])
            blob = fh.read(rec["nbytes"])
            if len(blob) != rec["nbytes"]:
                raise DataError("truncated dataset blob")
            if zlib.crc32(blob) != rec["crc32"]:
                raise ChecksumError(f"checksum mismatch for sample {rec['provenance'].get('index')}")
            grid = ResourceGrid(grid_from_bytes(blob).astype(np.complex128), numerology)
            yield Sample(grid, RadarLabels.from_dict(rec["labels"]), rec["provenance"])


def load_all(manifest_path) -> list[Sample]:
    return list(load(manifest_path))


def placed_pulses(samples: Sequence[Sample], pulses: Sequence[RadarPulse]) -> list[RadarPulse]:
    """Rebuild the placed pulse of every radar sample from its labels and the library."""
    lookup = {(p.type_id, p.waveform_id): p for p in pulses}
    out = []
    for s in samples:
        if not s.labels.detected:
            continue
        key = (s.labels.type_id, s.provenance.get("waveform_id"))
        if key not in lookup:
            raise DataError(f"waveform {key} is not in the pulse library")
        out.append(lookup[key].placed(s.labels.freq_hz, s.labels.time_s, s.labels.snr_db))
    return out
