import io
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from batstation.errors import ConfigError, DataError
from batstation.grid import (DEFAULT_NUMEROLOGY, GRID_MAGIC, GridRole, NumerologyConfig, ResourceGrid, SymbolKind,
                             as_array, assemble_grid, grid_column, grid_from_bytes, grid_power_db, grid_to_bytes,
                             iter_columns, read_grid, write_grid)

SMALL = replace(DEFAULT_NUMEROLOGY, active_subcarriers=12, symbols_per_slot=14)


def random_grid(rng, config=DEFAULT_NUMEROLOGY):
    return ResourceGrid(rng.standard_normal(config.shape) + 1j * rng.standard_normal(config.shape), config)


# ---------------------------------------------------------------- numerology

def test_default_numerology_values():
    cfg = DEFAULT_NUMEROLOGY
    assert cfg.shape == (3276, 14)
    assert cfg.dmrs_symbol_indices == (2, 7, 11)
    assert cfg.symbol_duration_s * cfg.subcarrier_spacing_hz == pytest.approx(1.0, abs=1e-15)
    assert cfg.symbol_duration_s == pytest.approx(33.333e-6, rel=1e-4)
    assert cfg.bandwidth_hz <= 100e6 + cfg.subcarrier_spacing_hz


@pytest.mark.parametrize("kw", [
    {"active_subcarriers": 5000},
    {"dmrs_symbol_indices": (7, 2, 11)},
    {"dmrs_symbol_indices": (2, 7, 14)},
    {"subcarrier_spacing_hz": 60e3},  # 3276 * 60 kHz exceeds 100 MHz
    {"symbols_per_slot": 0},
])
def test_numerology_invariants_rejected(kw):
    with pytest.raises(ConfigError):
        replace(DEFAULT_NUMEROLOGY, **kw)


def test_numerology_dict_round_trip():
    assert NumerologyConfig.from_dict(DEFAULT_NUMEROLOGY.to_dict()) == DEFAULT_NUMEROLOGY


def test_subcarrier_frequency_is_centred():
    f = DEFAULT_NUMEROLOGY.subcarrier_frequency(np.arange(3276))
    assert f[3276 // 2] == 0.0  # DC sits at index N/2, as in an fftshifted spectrum
    assert np.allclose(np.diff(f), 30e3)
    k = DEFAULT_NUMEROLOGY.frequency_to_subcarrier(f[[0, 1000, 3275]])
    assert np.allclose(k, [0, 1000, 3275])


# ---------------------------------------------------------------- containers

def test_grid_shape_and_finiteness_checked():
    with pytest.raises(ConfigError):
        ResourceGrid(np.zeros((10, 14)))
    bad = np.zeros(DEFAULT_NUMEROLOGY.shape, dtype=complex)
    bad[3, 3] = np.nan
    with pytest.raises(DataError):
        ResourceGrid(bad)


def test_grid_is_immutable_copy():
    src = np.ones(DEFAULT_NUMEROLOGY.shape, dtype=complex)
    g = ResourceGrid(src)
    src[0, 0] = 5
    assert g.data[0, 0] == 1
    with pytest.raises(ValueError):
        g.data[0, 0] = 2


def test_adopt_takes_ownership_without_copy():
    src = np.ones(DEFAULT_NUMEROLOGY.shape, dtype=complex)
    g = ResourceGrid.adopt(src, role=GridRole.RESIDUAL)
    assert g.data is src and not src.flags.writeable
    assert g.role is GridRole.RESIDUAL


def test_as_array_unwraps_containers():
    g = ResourceGrid.zeros()
    assert as_array(g) is g.data
    assert as_array(grid_column(g, 0)).shape == (3276,)
    assert isinstance(as_array([1, 2]), np.ndarray)


def test_grid_column_kinds():
    g = ResourceGrid.zeros()
    assert grid_column(g, 2).kind is SymbolKind.DMRS
    assert grid_column(g, 0).kind is SymbolKind.DATA
    with pytest.raises(IndexError):
        grid_column(g, 14)
    with pytest.raises(IndexError):
        grid_column(g, -1)


def test_column_round_trip_is_bit_exact(rng):
    g = random_grid(rng)
    back = assemble_grid(list(iter_columns(g)))
    assert np.array_equal(back.data, g.data)


def test_grid_power_db_examples():
    ones = ResourceGrid(np.ones(DEFAULT_NUMEROLOGY.shape, dtype=complex))
    assert np.all(grid_power_db(ones) == 0.0)
    assert np.all(grid_power_db(ResourceGrid.zeros()) == -300.0)
    assert grid_power_db(np.array([[10 + 0j]]))[0, 0] == pytest.approx(20.0)


@given(hnp.arrays(np.float64, 30, elements=st.floats(0, 1e6)))
def test_grid_power_db_monotone(mag):
    order = np.argsort(mag, kind="stable")
    p = grid_power_db(mag[order].astype(complex))
    assert np.all(np.diff(p) >= 0)


# ---------------------------------------------------------------- BATG format

def test_batg_header_layout():
    data = np.arange(12 * 14, dtype=float).reshape(12, 14) * (1 - 1j)
    blob = grid_to_bytes(data)
    assert blob[:4] == GRID_MAGIC
    assert int.from_bytes(blob[4:6], "little") == 1
    assert int.from_bytes(blob[6:10], "little") == 12
    assert int.from_bytes(blob[10:14], "little") == 14
    # column-major: the second stored entry is row 1 of column 0
    body = np.frombuffer(blob[14:], dtype="<f4")
    assert body[2] == data[1, 0].real and body[3] == data[1, 0].imag


@given(hnp.arrays(np.complex64, (12, 14), elements=st.complex_numbers(max_magnitude=1e6, allow_nan=False,
                                                                     allow_infinity=False, width=64)))
def test_batg_round_trip_bit_exact(data):
    back = grid_from_bytes(grid_to_bytes(data))
    assert back.dtype == np.complex64
    assert np.array_equal(back.view(np.uint8), data.view(np.uint8))


def test_read_write_grid_file(tmp_path, rng):
    g = ResourceGrid(random_grid(rng, SMALL).data.astype(np.complex64), SMALL)
    path = tmp_path / "g.batg"
    n = write_grid(path, g)
    assert n == path.stat().st_size == 14 + 8 * 12 * 14
    back = read_grid(path, SMALL)
    assert np.array_equal(back.data, g.data)
    buf = io.BytesIO()
    write_grid(buf, g)
    buf.seek(0)
    assert read_grid(buf).shape == (12, 14)


@pytest.mark.parametrize("mutate, msg", [
    (lambda b: b"XXXX" + b[4:], "magic"),
    (lambda b: b[:4] + (2).to_bytes(2, "little") + b[6:], "version"),
    (lambda b: b[:-3], "bytes"),
    (lambda b: b[:5], "header"),
])
def test_batg_corruption_detected(mutate, msg):
    blob = grid_to_bytes(np.ones((12, 14), dtype=complex))
    with pytest.raises(DataError, match=msg):
        grid_from_bytes(mutate(blob))
