import json
from collections import Counter

import numpy as np
import pytest

from batstation.dataset import (DISCRETE_OFFSETS_HZ, SyntheticConfig, build_synthetic, generate_sample,
                                generate_samples, load, load_all, placed_pulses, read_manifest, write_dataset)
from batstation.errors import ChecksumError, ConfigError, DataError
from batstation.grid import GridRole
from batstation.radar import gen_pulse, radar_only_grid
from batstation.reshape import ReshapeConfig, reshape_all

COUNTS = {0: 4, 1: 2, 2: 2, 3: 2, 4: 2, 5: 2}


@pytest.fixture(scope="module")
def small_set(library):
    return generate_samples(SyntheticConfig(), COUNTS, 7, library)


# ---------------------------------------------------------------- configuration

def test_config_validation_and_round_trip():
    cfg = SyntheticConfig(freq_mode="discrete", snr_db_set=(12, 30))
    assert SyntheticConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    with pytest.raises(ConfigError):
        SyntheticConfig(freq_mode="zipf")
    with pytest.raises(ConfigError):
        SyntheticConfig(snr_db_set=())
    with pytest.raises(ConfigError):
        SyntheticConfig(inr_db_range=(40.0, 20.0))
    with pytest.raises(ConfigError):
        SyntheticConfig.from_dict({"bogus": 1})


def test_count_validation(library):
    with pytest.raises(ConfigError):
        generate_samples(SyntheticConfig(), {1: 0}, 0, library)
    with pytest.raises(ConfigError):
        generate_samples(SyntheticConfig(), {1: 1}, 0, [])
    with pytest.raises(ConfigError):
        generate_sample(0, 0, SyntheticConfig(), gen_pulse(1, 0))  # radar without SNR


# ---------------------------------------------------------------- generation

def test_counts_are_exact(small_set):
    got = Counter(s.labels.type_id if s.labels.detected else 0 for s in small_set)
    assert dict(got) == COUNTS
    assert [s.index for s in small_set] == list(range(len(small_set)))


def test_labels_follow_the_contract(library):
    samples = generate_samples(SyntheticConfig(), {r: 10 for r in range(1, 6)}, 3, library)
    for s in samples:
        lab = s.labels
        assert s.grid.role is GridRole.RAW
        assert 0 <= lab.time_s < 0.5e-3
        if lab.type_id in (3, 5):
            assert lab.freq_hz == 0.0
        else:
            assert -40e6 <= lab.freq_hz <= 40e6
        assert lab.snr_db in SyntheticConfig().snr_db_set
        assert 24.3 <= s.provenance["inr_db"] <= 38.4


def test_null_samples_carry_no_radar_fields(small_set):
    for s in small_set:
        if not s.labels.detected:
            lab = s.labels
            assert lab.type_id is None and lab.freq_hz is None and lab.time_s is None
            assert "waveform_id" not in s.provenance


def test_discrete_frequency_mode(library):
    cfg = SyntheticConfig(freq_mode="discrete")
    samples = generate_samples(cfg, {1: 10, 4: 10}, 0, library)
    assert {s.labels.freq_hz for s in samples} <= set(DISCRETE_OFFSETS_HZ)


def test_generation_is_deterministic(library):
    a = generate_samples(SyntheticConfig(), COUNTS, 11, library)
    b = generate_samples(SyntheticConfig(), COUNTS, 11, library, threads=3)
    for x, y in zip(a, b):
        assert np.array_equal(x.grid.data, y.grid.data) and x.labels == y.labels
    c = generate_samples(SyntheticConfig(), COUNTS, 12, library)
    assert not np.array_equal(c[0].grid.data, a[0].grid.data)


def test_label_consistency_on_noise_free_regeneration(library, small_set):
    cfg = ReshapeConfig()
    for p in placed_pulses(small_set, library):
        if p.type_id in (3, 5):
            continue  # wideband energy fills the band; its centre is fixed by construction
        pooled = reshape_all(radar_only_grid(p), cfg)[p.type_id].amp
        n, m = np.nonzero(pooled > 0.5 * pooled.max())
        assert abs(np.median(n) - cfg.freq_to_row(p.type_id, p.center_freq_offset_hz)) <= 1
        assert abs(m.min() - cfg.time_to_col(p.start_time_s)) <= 1


def test_placed_pulses_need_the_library(small_set):
    with pytest.raises(DataError):
        placed_pulses(small_set, [])


# ---------------------------------------------------------------- persistence

def test_round_trip_is_bit_exact(tmp_path, small_set):
    man = write_dataset(small_set, tmp_path, "test", SyntheticConfig())
    back = load_all(man.path)
    assert len(back) == len(small_set) == len(man)
    for a, b in zip(small_set, back):
        assert np.array_equal(a.grid.data, b.grid.data)
        assert a.labels == b.labels and a.provenance == b.provenance
    assert read_manifest(man.path).split == "test"
    assert read_manifest(man.path).config == SyntheticConfig()


def test_same_seed_gives_identical_files(tmp_path, library):
    for d in ("a", "b"):
        build_synthetic(SyntheticConfig(), COUNTS, 5, library, tmp_path / d, "train")
    for name in ("train.json", "train.batg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_corruption_is_detected(tmp_path, small_set):
    man = write_dataset(small_set[:3], tmp_path, "val", SyntheticConfig())
    blob = tmp_path / "val.batg"
    good = blob.read_bytes()
    raw = bytearray(good)
    raw[100] ^= 0x01
    blob.write_bytes(bytes(raw))
    with pytest.raises(ChecksumError):
        load_all(man.path)
    blob.write_bytes(good[:len(good) // 2])
    with pytest.raises(DataError, match="truncated"):
        load_all(man.path)


@pytest.mark.parametrize("edit", [
    lambda d: d.update(version=99),
    lambda d: d.update(format="other"),
])
def test_manifest_validation(tmp_path, small_set, edit):
    man = write_dataset(small_set[:2], tmp_path, "test", SyntheticConfig())
    data = json.loads(man.path.read_text())
    edit(data)
    man.path.write_text(json.dumps(data))
    with pytest.raises(DataError):
        read_manifest(man.path)
    man.path.write_text("{not json")
    with pytest.raises(DataError):
        read_manifest(man.path)


def test_missing_and_bad_split(tmp_path, small_set):
    with pytest.raises(FileNotFoundError):
        list(load(tmp_path / "absent.json"))
    with pytest.raises(ConfigError):
        write_dataset(small_set[:1], tmp_path, "holdout", SyntheticConfig())
