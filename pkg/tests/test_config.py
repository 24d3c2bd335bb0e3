import json

import pytest

from batstation.config import AppConfig, TrainingConfig, load_config
from batstation.errors import ConfigError
from batstation.grid import DEFAULT_NUMEROLOGY
from batstation.radar import DEFAULT_RADAR_TYPES


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_defaults():
    cfg = load_config(None)
    assert cfg == AppConfig()
    assert cfg.numerology == DEFAULT_NUMEROLOGY and cfg.reshape.alpha == 4
    assert cfg.training == TrainingConfig(1e-3, 1e-3, 200, 0.05, 30.0)
    assert cfg.types == DEFAULT_RADAR_TYPES


def test_toml_overrides(tmp_path):
    p = write(tmp_path, "c.toml", """
[reshape]
alpha = 2
pool_sizes = {1 = 3, 2 = 3, 3 = 7, 4 = 3, 5 = 7}

[dataset]
snr_db_set = [20, 30]
freq_mode = "discrete"

[training]
epochs = 5
lr = 0.01
""")
    cfg = load_config(p)
    assert cfg.reshape.alpha == 2 and cfg.reshape.pool_size(3) == 7
    assert cfg.synthetic.snr_db_set == (20.0, 30.0) and cfg.synthetic.freq_mode == "discrete"
    assert cfg.training.epochs == 5 and cfg.training.lr == 0.01
    assert cfg.with_training(epochs=None, lr=0.5).training.lr == 0.5


def test_json_config_and_numerology(tmp_path):
    p = write(tmp_path, "c.json", json.dumps({"numerology": {"active_subcarriers": 3264}}))
    cfg = load_config(p)
    assert cfg.numerology.active_subcarriers == 3264
    assert cfg.synthetic.numerology == cfg.numerology == cfg.reshape.numerology


@pytest.mark.parametrize("text", [
    "[mystery]\n",
    "[training]\nbatch = 3\n",
    "[training]\nlr = -1.0\n",
    "[training]\ntarget_far = 1.5\n",
    "[reshape]\nalpha = 5\n",
    "[reshape]\npool_sizes = {1 = 3}\n",
    "[dataset]\nfreq_mode = 'spiral'\n",
    "[numerology]\nactive_subcarriers = 9000\n",
    "reshape = 3\n",
    "not toml at all [[",
])
def test_invalid_configs(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "bad.toml", text))


def test_missing_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")


def test_radar_types_table(tmp_path):
    types = [DEFAULT_RADAR_TYPES[r].to_dict() for r in sorted(DEFAULT_RADAR_TYPES)]
    types[0]["duration_range_s"] = [1e-6, 2e-6]
    cfg = load_config(write(tmp_path, "c.json", json.dumps({"radar_types": types})))
    assert cfg.types[1].duration_range_s == (1e-6, 2e-6)
    assert cfg.synthetic.types[1].duration_range_s == (1e-6, 2e-6)
