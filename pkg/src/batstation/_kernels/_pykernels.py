"""Pure numpy implementations of the hot kernels.

Semantics match the compiled versions exactly, including tie-breaking.
"""
import numpy as np


def nearest_index(z, points):
    """Index of the nearest constellation point for every entry of ``z``.

    Ties resolve to the lowest index.
    """
    z = np.ascontiguousarray(z, dtype=np.complex128).ravel()
    points = np.ascontiguousarray(points, dtype=np.complex128)
    levels = np.unique(points.real)
    side = len(levels)
    square = (side * side == len(points)
              and np.array_equal(points, (levels[:, None] + 1j * levels[None, :]).ravel()))
    if square:
        return _square_index(z.real, levels) * side + _square_index(z.imag, levels)
    out = np.empty(z.shape, dtype=np.int64)
    step = 65536
    for s in range(0, len(z), step):
        d = np.abs(z[s:s + step, None] - points[None, :]) ** 2
        out[s:s + step] = np.argmin(d, axis=1)
    return out


def _square_index(x, levels):
    # nearest level per axis; a tie goes to the lower level (lower point index)
    step = np.diff(levels)
    if not np.allclose(step, step[0], rtol=1e-9, atol=0.0):
        return _bracket_index(x, levels, np.searchsorted(levels, x, side="left"))
    # evenly spaced: round arithmetically, then settle near-midpoints exactly
    t = (x - levels[0]) * (1.0 / step[0])
    base = np.floor(t)
    with np.errstate(invalid="ignore"):  # non-finite inputs map to an arbitrary level, as before
        idx = np.clip(base + (t - base >= 0.5), 0, len(levels) - 1).astype(np.int64)
    near = np.flatnonzero(np.abs(t - base - 0.5) < 1e-6)
    if near.size:
        idx[near] = _bracket_index(x[near], levels, base[near].astype(np.int64) + 1)
    return idx


def _bracket_index(x, levels, idx):
    idx = np.clip(idx, 1, len(levels) - 1)
    lo, hi = levels[idx - 1], levels[idx]
    take_hi = (hi - x) ** 2 < (x - lo) ** 2
    return np.where(take_hi, idx, idx - 1).astype(np.int64)


def maxpool_rows(mag, pool):
    """Max over every ``pool`` consecutive rows; the last block may be partial."""
    mag = np.asarray(mag, dtype=np.float64)
    n, m = mag.shape
    full = n - n % pool
    out = np.empty((-(-n // pool), m), dtype=np.float64)
    np.max(mag[:full].reshape(-1, pool, m), axis=1, out=out[:full // pool])
    if full < n:
        np.max(mag[full:], axis=0, out=out[-1])
    return out


def correlate_max(grid, weights, f_off):
    """Zero-padded multi-channel correlation, max over channels.

    ``out[n, m] = max_c sum_{a, b} w[c, a, b] * grid[n + a - f_off, m + b]``.
    Returns ``(out, channel_argmax)``; channel ties go to the lowest channel.
    """
    grid = np.asarray(grid, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    n, m = grid.shape
    c, nt, mt = weights.shape
    pad = np.zeros((n + nt, m + mt), dtype=np.float64)
    pad[f_off:f_off + n, :m] = grid
    best = None
    chan = np.zeros((n, m), dtype=np.int64)
    for ci in range(c):
        acc = np.zeros((n, m), dtype=np.float64)
        for a in range(nt):
            for b in range(mt):
                w = weights[ci, a, b]
                if w != 0.0:
                    acc += w * pad[a:a + n, b:b + m]
        if best is None:
            best = acc
        else:
            better = acc > best
            best = np.where(better, acc, best)
            chan[better] = ci
    return best, chan


_MAD_SCALE = 1.4826
_ZERO_MAD_REL = 1e-6


def _med3(x):
    a, b, c = x[:, 0], x[:, 1], x[:, 2]
    return np.maximum(np.minimum(a, b), np.minimum(np.maximum(a, b), c))


def _cdist(a, b):
    d = np.abs(a - b)
    return np.minimum(d, 2 * np.pi - d)


def _cmed3(p):
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    dxy, dxz, dyz = _cdist(x, y), _cdist(x, z), _cdist(y, z)
    d0, d1, d2 = dxy + dxz, dxy + dyz, dxz + dyz
    return np.where((d0 <= d1) & (d0 <= d2), x, np.where(d1 <= d2, y, z))


def hampel3(h, k):
    """Hampel filter with window 3 over exactly three estimates per row.

    Amplitude and phase (circular) are screened against the window median
    with a ``k * 1.4826 * MAD`` threshold; a zero MAD falls back to
    ``1e-6 * |median|`` (amplitude) or ``1e-6 * pi`` (phase). Flagged
    samples take the medians; the fused value is median amplitude times
    ``exp(j * circular median phase)``. Returns ``(fused, outlier_mask)``.
    """
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim != 2 or h.shape[1] != 3:
        raise ValueError("hampel3 needs exactly three estimates per row")
    amp = np.hypot(h.real, h.imag)
    ph = np.arctan2(h.imag, h.real)
    a_med = _med3(amp)
    p_med = _cmed3(ph)
    da = np.abs(amp - a_med[:, None])
    dp = _cdist(ph, p_med[:, None])
    a_mad = _med3(da)
    p_mad = _med3(dp)
    a_thr = np.where(a_mad > 0, k * _MAD_SCALE * a_mad, _ZERO_MAD_REL * np.abs(a_med))
    p_thr = np.where(p_mad > 0, k * _MAD_SCALE * p_mad, _ZERO_MAD_REL * np.pi)
    mask = (da > a_thr[:, None]) | (dp > p_thr[:, None])
    amp = np.where(mask, a_med[:, None], amp)
    ph = np.where(mask, p_med[:, None], ph)
    a_f = _med3(amp)
    p_f = _cmed3(ph)
    return a_f * np.cos(p_f) + 1j * (a_f * np.sin(p_f)), mask


def cancel_rows(y, h, points, is_dmrs, x_dmrs):
    """Subtract the re-modulated 5G estimate from allocated rows.

    Data columns are equalised by ``h``, rounded to the nearest point and
    re-multiplied by ``h``; DMRS columns (``is_dmrs``) use the known
    ``x_dmrs``. Returns ``y - h * x_hat``.
    """
    y = np.asarray(y, dtype=np.complex128)
    h = np.asarray(h, dtype=np.complex128)
    points = np.asarray(points, dtype=np.complex128)
    is_dmrs = np.asarray(is_dmrs, dtype=bool)
    x = np.empty(y.shape, dtype=np.complex128)
    data = ~is_dmrs
    z = y[:, data] * (1.0 / h)[:, None]
    x[:, data] = points[nearest_index(z, points).reshape(z.shape)]
    x[:, is_dmrs] = np.asarray(x_dmrs, dtype=np.complex128)[:, None]
    x *= h[:, None]
    return np.subtract(y, x, out=x)
