"""Cancel the 5G uplink contribution from a received grid.

The BS knows each user's allocation, modulation and DMRS sequence, so it can
estimate the channel from the DMRS columns, reject DMRS symbols hit by a radar
pulse with a Hampel filter, re-demodulate the data by rounding to the
constellation, rebuild the clean 5G grid and subtract it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InsufficientDataError, MalformedReferenceError
from .grid import ComplexVectorSymbol, GridRole, ResourceGrid, as_array
from .phy import Constellation, UplinkAllocation, make_dmrs_sequence

MAD_SCALE = 1.4826
ZERO_MAD_REL = 1e-6


@dataclass(frozen=True, eq=False)
class CsiEstimate:
    h_hat: np.ndarray
    per_dmrs_raw: list
    outlier_mask: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.h_hat)


def estimate_csi_raw(y_dmrs: ComplexVectorSymbol | np.ndarray, x_dmrs: ComplexVectorSymbol | np.ndarray,
                     mask: np.ndarray | None = None) -> np.ndarray:
    """Element-wise ``y / x`` on allocated subcarriers; NaN marks unallocated ones.

    Without ``mask`` the allocation is taken to be the non-zero support of
    ``x_dmrs``.
    """
    y = as_array(y_dmrs)
    x = as_array(x_dmrs)
    if mask is None:
        mask = x != 0
    elif np.any(x[mask] == 0):
        raise MalformedReferenceError("reference symbol is zero on an allocated subcarrier")
    h = np.full(y.shape, np.nan + 1j * np.nan, dtype=np.complex128)
    h[mask] = y[mask] / x[mask]
    return h


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def _circ_dist(a, b):
    """Absolute circular distance of angles already in [-pi, pi]."""
    d = np.abs(a - b)
    return np.minimum(d, 2 * np.pi - d)


def _median_rows(x: np.ndarray) -> np.ndarray:
    """Median along the last axis; width 3 takes a branch-free shortcut."""
    if x.shape[-1] == 3:
        a, b, c = x[..., 0], x[..., 1], x[..., 2]
        return np.maximum(np.minimum(a, b), np.minimum(np.maximum(a, b), c))
    return np.median(x, axis=-1)


def circular_median(angles: np.ndarray) -> np.ndarray:
    """Sample angle minimising the summed absolute circular distance (last axis).

    Angles are wrapped to [-pi, pi) first. Ties resolve to the earliest sample.
    """
    a = np.asarray(angles, dtype=float)
    if np.any(np.abs(a) > np.pi):
        a = _wrap(a)
    if a.shape[-1] == 3:
        x, y, z = a[..., 0], a[..., 1], a[..., 2]
        dxy, dxz, dyz = _circ_dist(x, y), _circ_dist(x, z), _circ_dist(y, z)
        d0, d1, d2 = dxy + dxz, dxy + dyz, dxz + dyz
        return np.where((d0 <= d1) & (d0 <= d2), x, np.where(d1 <= d2, y, z))
    d = _circ_dist(a[..., :, None], a[..., None, :]).sum(axis=-1)
    idx = np.argmin(d, axis=-1)
    return np.take_along_axis(a, idx[..., None], axis=-1)[..., 0]


def _outliers(dev: np.ndarray, scale_ref: np.ndarray | float, k: float) -> np.ndarray:
    """Hampel test on absolute deviations from the window median (last axis)."""
    mad = _median_rows(dev)[..., None]
    thr = np.where(mad > 0, k * MAD_SCALE * mad, ZERO_MAD_REL * np.broadcast_to(scale_ref, mad.shape))
    return dev > thr


def _window_stats(wa: np.ndarray, wp: np.ndarray, k: float):
    """Medians and outlier flags of one Hampel window (rows are subcarriers)."""
    a_med = _median_rows(wa)
    p_med = circular_median(wp)
    a_out = _outliers(np.abs(wa - a_med[:, None]), np.abs(a_med)[:, None], k)
    p_out = _outliers(_circ_dist(wp, p_med[:, None]), np.pi, k)
    return a_med, p_med, a_out, p_out


def _hampel_general(hv: np.ndarray, window: int, k: float):
    n_est = hv.shape[1]
    amp = np.abs(hv)
    ph = np.angle(hv)
    mask_v = np.zeros(hv.shape, dtype=bool)
    amp_f = amp.copy()
    ph_f = ph.copy()
    stats = {}
    for i in range(n_est):
        s = min(max(i - window // 2, 0), n_est - window)
        if s not in stats:
            stats[s] = _window_stats(amp[:, s:s + window], ph[:, s:s + window], k)
        a_med, p_med, a_out, p_out = stats[s]
        flag = a_out[:, i - s] | p_out[:, i - s]
        mask_v[:, i] = flag
        amp_f[:, i] = np.where(flag, a_med, amp[:, i])
        ph_f[:, i] = np.where(flag, p_med, ph[:, i])
    return _median_rows(amp_f) * np.exp(1j * circular_median(ph_f)), mask_v


def hampel_csi(raw_estimates, window: int = 3, k: float = 3.0) -> CsiEstimate:
    """Hampel-filter per-DMRS CSI estimates and fuse them into one estimate.

    Amplitude and phase are screened separately (the phase with a circular
    median); a sample flagged on either is replaced by the window's
    (amplitude, phase) median. The fused estimate is the median amplitude
    times ``exp(j * circular median phase)`` of the filtered samples.
    """
    raw = [np.asarray(as_array(r), dtype=np.complex128) for r in raw_estimates]
    n_est = len(raw)
    if n_est < window or window < 1:
        raise InsufficientDataError(f"need at least {window} DMRS estimates, got {n_est}")
    h = np.stack(raw, axis=1)  # subcarrier x DMRS index
    valid = np.all(np.isfinite(h), axis=1)
    hv = h[valid]
    h_hat = np.full(h.shape[0], np.nan + 1j * np.nan, dtype=np.complex128)
    if n_est == window == 3:
        h_hat[valid], mask_v = _kernels.hampel3(hv, k)
    else:
        h_hat[valid], mask_v = _hampel_general(hv, window, k)
    mask = np.zeros(h.shape, dtype=bool)
    mask[valid] = mask_v
    return CsiEstimate(h_hat, raw, mask)


def demod_and_round(y_data, h_hat: np.ndarray, constellation: Constellation):
    """Equalise by ``h_hat`` and round to the nearest constellation point.

    Works on one symbol vector or a subcarrier x symbol block. Entries where
    ``h_hat`` is not finite (unallocated) give zeros. Returns
    ``(x_hat, error)`` with ``error = y / h_hat - x_hat``.
    """
    y = np.asarray(as_array(y_data), dtype=np.complex128)
    h = np.asarray(h_hat, dtype=np.complex128)
    ok = np.isfinite(h)
    x_hat = np.zeros(y.shape, dtype=np.complex128)
    err = np.zeros(y.shape, dtype=np.complex128)
    if y.ndim == 1:
        z = y[ok] / h[ok]
    else:
        z = y[ok, :] / h[ok, None]
    idx = _kernels.nearest_index(z.ravel(), constellation.points).reshape(z.shape)
    pts = constellation.points[idx]
    x_hat[ok] = pts
    err[ok] = z - pts
    return x_hat, err


def reconstruct_5g(x_hat_grid: np.ndarray, x_dmrs_known: np.ndarray, h_hat: np.ndarray, config) -> ResourceGrid:
    """Rebuild ``h_hat * x`` using demodulated data and the known DMRS columns."""
    h = np.where(np.isfinite(h_hat), h_hat, 0)
    x = np.array(x_hat_grid, dtype=np.complex128)
    x_dmrs = as_array(x_dmrs_known)
    for m in config.dmrs_symbol_indices:
        x[:, m] = x_dmrs
    return ResourceGrid(h[:, None] * x, config, GridRole.RECONSTRUCTED_5G)


def _expand(part: CsiEstimate, sl: slice, n: int) -> CsiEstimate:
    """Embed a CSI estimate over the allocated rows into full-length arrays."""
    h_hat = np.full(n, np.nan + 1j * np.nan, dtype=np.complex128)
    h_hat[sl] = part.h_hat
    raws = np.full((len(part.per_dmrs_raw), n), np.nan + 1j * np.nan, dtype=np.complex128)
    raws[:, sl] = part.per_dmrs_raw
    mask = np.zeros((n, part.outlier_mask.shape[1]), dtype=bool)
    mask[sl] = part.outlier_mask
    return CsiEstimate(h_hat, list(raws), mask)


def separate(y_raw: ResourceGrid, alloc: UplinkAllocation, dmrs_seed: int = 0,
             constellation: Constellation | None = None, window: int = 3, k: float = 3.0):
    """Residual grid ``Y_raw - Y_5G_hat`` and the CSI estimate used to build it."""
    config = y_raw.config
    constellation = alloc.constellation if constellation is None else constellation
    y = y_raw.data
    if alloc.subcarrier_count == 0:
        empty = np.full(config.active_subcarriers, np.nan + 1j * np.nan)
        csi = CsiEstimate(empty, [], np.zeros((config.active_subcarriers, 0), dtype=bool))
        return y_raw.with_data(y, GridRole.RESIDUAL), csi
    sl = slice(alloc.subcarrier_start, alloc.subcarrier_start + alloc.subcarrier_count)
    x_dmrs = make_dmrs_sequence(dmrs_seed, alloc).data
    # Estimate and rebuild only the allocated rows; elsewhere the 5G estimate is zero.
    x_ref = x_dmrs[sl]
    if np.any(x_ref == 0):
        raise MalformedReferenceError("reference symbol is zero on an allocated subcarrier")
    dmrs_cols = list(config.dmrs_symbol_indices)
    raw_sl = y[sl][:, dmrs_cols] * (1.0 / x_ref)[:, None]
    fused = hampel_csi(raw_sl.T, window, k)
    h = fused.h_hat
    csi = _expand(fused, sl, config.active_subcarriers)
    is_dmrs = np.zeros(config.symbols_per_slot, dtype=bool)
    is_dmrs[dmrs_cols] = True
    residual = np.array(y)
    residual[sl] = _kernels.cancel_rows(y[sl], h, constellation.points, is_dmrs, x_ref)
    return ResourceGrid.adopt(residual, config, GridRole.RESIDUAL), csi
