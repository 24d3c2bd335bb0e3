import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from batstation import _kernels
from batstation._kernels import python_backend as py
from batstation.phy import Constellation

cy = _kernels.compiled_backend
needs_compiled = pytest.mark.skipif(cy is None, reason="compiled kernels not built")


def cplx(rng, *shape, scale=1.0):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


# ---------------------------------------------------------------- backend selection

def test_backend_matches_environment():
    assert _kernels.BACKEND in ("cython", "python")
    forced = os.environ.get("BATSTATION_PURE_PYTHON") == "1"
    assert (_kernels.BACKEND == "python") == (forced or cy is None)


def test_pure_python_flag_forces_fallback():
    env = dict(os.environ, BATSTATION_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from batstation import _kernels; print(_kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


# ---------------------------------------------------------------- fallback semantics

@pytest.mark.parametrize("order", ["QPSK", "QAM16", "QAM64"])
def test_nearest_index_fallback_is_brute_force(rng, order):
    pts = Constellation.of(order).points
    z = cplx(rng, 4000, scale=1.3)
    ref = np.argmin(np.abs(z[:, None] - pts[None]) ** 2, axis=1)
    assert np.array_equal(py.nearest_index(z, pts), ref)


@pytest.mark.parametrize("side", [2, 4, 8])
def test_nearest_index_fallback_exact_ties_go_low(side):
    lv = 2.0 * np.arange(side) - (side - 1)  # odd integers: midpoints are exact
    pts = (lv[:, None] + 1j * lv[None, :]).ravel()
    mid = (lv[:-1] + lv[1:]) / 2
    lower = np.arange(side - 1)
    assert np.array_equal(py.nearest_index(mid + 1j * mid, pts), lower * side + lower)
    exact = np.arange(side)
    assert np.array_equal(py.nearest_index(lv + 1j * lv[::-1], pts), exact * side + exact[::-1])


def test_nearest_index_general_constellation(rng):
    pts = np.exp(2j * np.pi * np.arange(8) / 8)  # 8-PSK is not a square grid
    z = cplx(rng, 500)
    ref = np.argmin(np.abs(z[:, None] - pts[None]) ** 2, axis=1)
    assert np.array_equal(py.nearest_index(z, pts), ref)


# ---------------------------------------------------------------- compiled equals fallback

@needs_compiled
@pytest.mark.parametrize("order", ["QPSK", "QAM16", "QAM64"])
def test_nearest_index_backends_agree(rng, order):
    pts = Constellation.of(order).points
    z = cplx(rng, 20000, scale=1.5)
    lv = Constellation.of(order).levels
    ties = (lv[:-1] + lv[1:]) / 2  # exact decision boundaries
    z[:len(ties)] = ties + 1j * ties
    assert np.array_equal(cy.nearest_index(z, pts), py.nearest_index(z, pts))


@needs_compiled
@given(st.integers(1, 60), st.integers(1, 30), st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_maxpool_backends_agree(rows, cols, pool, seed):
    mag = np.random.default_rng(seed).random((rows, cols))
    assert np.array_equal(cy.maxpool_rows(mag, pool), py.maxpool_rows(mag, pool))


@needs_compiled
@given(st.integers(1, 25), st.integers(1, 25), st.integers(1, 2), st.integers(1, 9), st.integers(1, 7),
       st.integers(0, 2**32 - 1))
def test_correlate_backends_agree(n, m, c, nt, mt, seed):
    rng = np.random.default_rng(seed)
    grid = rng.random((n, m))
    w = rng.standard_normal((c, nt, mt))
    f_off = int(rng.integers(0, nt))
    a, ca = cy.correlate_max(grid, w, f_off)
    b, cb = py.correlate_max(grid, w, f_off)
    assert np.allclose(a, b, rtol=0, atol=1e-12)
    same = a == b
    assert np.array_equal(ca[same], cb[same])


@needs_compiled
def test_hampel_backends_agree(rng):
    h = cplx(rng, 5000, 3)
    h[:1000, 1] = h[:1000, 0]  # zero-MAD rows
    h[1000:2000, 2] *= 30  # amplitude outliers
    h[2000:2100] = -1.0 + 1e-17j  # phases on the branch cut
    fa, ma = cy.hampel3(h, 3.0)
    fb, mb = py.hampel3(h, 3.0)
    assert np.array_equal(ma, mb)
    assert np.max(np.abs(fa - fb)) < 1e-12


@needs_compiled
def test_cancel_rows_backends_agree(rng):
    pts = Constellation.of("QAM16").points
    is_dmrs = np.zeros(14, dtype=bool)
    is_dmrs[[2, 7, 11]] = True
    h = cplx(rng, 600, scale=5.0)
    x = pts[rng.integers(0, 16, (600, 14))]
    x_dmrs = pts[rng.integers(0, 16, 600)]
    y = h[:, None] * x + cplx(rng, 600, 14, scale=0.3)
    a = cy.cancel_rows(y, h, pts, is_dmrs, x_dmrs)
    b = py.cancel_rows(y, h, pts, is_dmrs, x_dmrs)
    assert np.max(np.abs(a - b)) < 1e-12
