# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels (see ``_pykernels`` for the reference semantics)."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def nearest_index(z, points):
    cdef const double complex[::1] zv = np.ascontiguousarray(z, dtype=np.complex128).ravel()
    cdef const double complex[::1] pv = np.ascontiguousarray(points, dtype=np.complex128)
    levels = np.unique(np.asarray(points).real)
    side = len(levels)
    if side * side == pv.shape[0] and np.array_equal(
            np.asarray(points), (levels[:, None] + 1j * levels[None, :]).ravel()):
        return _square_nearest(zv, np.ascontiguousarray(levels, dtype=np.float64))
    cdef Py_ssize_t n = zv.shape[0], k = pv.shape[0], i, j, best_j
    cdef double best, d, dr, di
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] ov = out
    for i in range(n):
        best = 1e308
        best_j = 0
        for j in range(k):
            dr = zv[i].real - pv[j].real
            di = zv[i].imag - pv[j].imag
            d = dr * dr + di * di
            if d < best:
                best = d
                best_j = j
        ov[i] = best_j
    return out


cdef inline Py_ssize_t _nearest_level(double x, const double* lv, Py_ssize_t nl) noexcept nogil:
    cdef Py_ssize_t j, best_j = 0
    cdef double d, best = (x - lv[0]) * (x - lv[0])
    cdef bint closer
    for j in range(1, nl):
        d = (x - lv[j]) * (x - lv[j])
        closer = d < best
        best = d if closer else best
        best_j = j if closer else best_j
    return best_j


def _square_nearest(const double complex[::1] zv, const double[::1] lv):
    cdef Py_ssize_t n = zv.shape[0], side = lv.shape[0], i
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] ov = out
    cdef const double* lp = &lv[0]
    cdef const double* zp = <const double*> &zv[0] if n > 0 else NULL
    with nogil:
        for i in range(n):
            ov[i] = _nearest_level(zp[2 * i], lp, side) * side + _nearest_level(zp[2 * i + 1], lp, side)
    return out


def maxpool_rows(mag, Py_ssize_t pool):
    cdef const double[:, ::1] x = np.ascontiguousarray(mag, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1]
    cdef Py_ssize_t nb = (n + pool - 1) // pool, b, r, c, r0, r1
    cdef double v, cur
    out = np.empty((nb, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    for b in range(nb):
        r0 = b * pool
        r1 = min(r0 + pool, n)
        for c in range(m):
            o[b, c] = x[r0, c]
        for r in range(r0 + 1, r1):
            for c in range(m):
                # branch-free max; the data-dependent branch mispredicts on noise
                v = x[r, c]
                cur = o[b, c]
                o[b, c] = v if v > cur else cur
    return out


def correlate_max(grid, weights, Py_ssize_t f_off):
    cdef const double[:, ::1] y = np.ascontiguousarray(grid, dtype=np.float64)
    cdef const double[:, :, ::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = y.shape[0], m = y.shape[1]
    cdef Py_ssize_t nc = w.shape[0], nt = w.shape[1], mt = w.shape[2]
    cdef Py_ssize_t ci, a, b, i, j, src, jmax
    cdef double wv
    cdef bint better
    out = np.empty((n, m), dtype=np.float64)
    chan = np.zeros((n, m), dtype=np.int64)
    acc_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double[:, ::1] acc = acc_arr
    cdef cnp.int64_t[:, ::1] ch = chan
    for ci in range(nc):
        acc[:, :] = 0.0
        for a in range(nt):
            for b in range(mt):
                wv = w[ci, a, b]
                if wv == 0.0 or b >= m:
                    continue
                jmax = m - b
                for i in range(n):
                    src = i + a - f_off
                    if src < 0 or src >= n:
                        continue
                    for j in range(jmax):
                        acc[i, j] += wv * y[src, j + b]
        if ci == 0:
            o[:, :] = acc
        else:
            for i in range(n):
                for j in range(m):
                    better = acc[i, j] > o[i, j]
                    o[i, j] = acc[i, j] if better else o[i, j]
                    ch[i, j] = ci if better else ch[i, j]
    return out, chan


cdef extern from "math.h" nogil:
    double hypot(double, double)
    double atan2(double, double)
    double cos(double)
    double sin(double)
    double fabs(double)

cdef double _PI = 3.141592653589793
cdef double _MAD_SCALE = 1.4826
cdef double _ZERO_MAD_REL = 1e-6


cdef inline double _med3(double a, double b, double c) noexcept nogil:
    cdef double lo = a if a < b else b
    cdef double hi = a if a > b else b
    cdef double m2 = hi if hi < c else c
    return lo if lo > m2 else m2


cdef inline double _cdist(double a, double b) noexcept nogil:
    cdef double d = fabs(a - b)
    cdef double e = 2 * _PI - d
    return d if d < e else e


cdef inline double _cmed3(double x, double y, double z) noexcept nogil:
    cdef double dxy = _cdist(x, y), dxz = _cdist(x, z), dyz = _cdist(y, z)
    cdef double d0 = dxy + dxz, d1 = dxy + dyz, d2 = dxz + dyz
    if d0 <= d1 and d0 <= d2:
        return x
    return y if d1 <= d2 else z


def hampel3(h, double k):
    """Hampel filter over exactly three estimates per row (window 3); see ``_pykernels``."""
    cdef const double complex[:, ::1] hv = np.ascontiguousarray(h, dtype=np.complex128)
    cdef Py_ssize_t n = hv.shape[0], i, j
    if hv.shape[1] != 3:
        raise ValueError("hampel3 needs exactly three estimates per row")
    fused = np.empty(n, dtype=np.complex128)
    mask = np.zeros((n, 3), dtype=np.uint8)
    cdef double complex[::1] fv = fused
    cdef unsigned char[:, ::1] mv = mask
    cdef double a[3]
    cdef double p[3]
    cdef double da[3]
    cdef double dp[3]
    cdef double a_med, p_med, a_mad, p_mad, a_thr, p_thr, amp, ph
    with nogil:
        for i in range(n):
            for j in range(3):
                a[j] = hypot(hv[i, j].real, hv[i, j].imag)
                p[j] = atan2(hv[i, j].imag, hv[i, j].real)
            a_med = _med3(a[0], a[1], a[2])
            p_med = _cmed3(p[0], p[1], p[2])
            for j in range(3):
                da[j] = fabs(a[j] - a_med)
                dp[j] = _cdist(p[j], p_med)
            a_mad = _med3(da[0], da[1], da[2])
            p_mad = _med3(dp[0], dp[1], dp[2])
            a_thr = k * _MAD_SCALE * a_mad if a_mad > 0 else _ZERO_MAD_REL * fabs(a_med)
            p_thr = k * _MAD_SCALE * p_mad if p_mad > 0 else _ZERO_MAD_REL * _PI
            for j in range(3):
                if da[j] > a_thr or dp[j] > p_thr:
                    mv[i, j] = 1
                    a[j] = a_med
                    p[j] = p_med
            amp = _med3(a[0], a[1], a[2])
            ph = _cmed3(p[0], p[1], p[2])
            fv[i] = amp * cos(ph) + 1j * (amp * sin(ph))
    return fused, mask.astype(bool)


def cancel_rows(y, h, points, is_dmrs, x_dmrs):
    """Residual ``y - h * x_hat`` of allocated rows; see ``_pykernels.cancel_rows``."""
    cdef const double complex[:, ::1] yv = np.ascontiguousarray(y, dtype=np.complex128)
    cdef const double complex[::1] hv = np.ascontiguousarray(h, dtype=np.complex128)
    cdef const double complex[::1] xd = np.ascontiguousarray(x_dmrs, dtype=np.complex128)
    cdef const unsigned char[::1] dm = np.ascontiguousarray(is_dmrs, dtype=np.uint8)
    cdef const double complex[::1] pv = np.ascontiguousarray(points, dtype=np.complex128)
    cdef Py_ssize_t n = yv.shape[0], m = yv.shape[1], kpts = pv.shape[0], i, j, q, best_q
    if hv.shape[0] != n or xd.shape[0] != n or dm.shape[0] != m:
        raise ValueError("shape mismatch")
    levels = np.unique(np.asarray(points).real)
    cdef Py_ssize_t side = len(levels)
    cdef bint square = side * side == kpts and np.array_equal(
        np.asarray(points), (levels[:, None] + 1j * levels[None, :]).ravel())
    cdef const double[::1] lv = np.ascontiguousarray(levels, dtype=np.float64)
    cdef const double* lp = &lv[0]
    out = np.empty((n, m), dtype=np.complex128)
    cdef double complex[:, ::1] ov = out
    cdef double complex hi, inv, z, x
    cdef double best, d, dr, di
    cdef bint closer
    with nogil:
        for i in range(n):
            hi = hv[i]
            inv = 1.0 / hi
            for j in range(m):
                if dm[j]:
                    x = xd[i]
                else:
                    z = yv[i, j] * inv
                    if square:
                        x = pv[_nearest_level(z.real, lp, side) * side + _nearest_level(z.imag, lp, side)]
                    else:
                        best = 1e308
                        best_q = 0
                        for q in range(kpts):
                            dr = z.real - pv[q].real
                            di = z.imag - pv[q].imag
                            d = dr * dr + di * di
                            closer = d < best
                            best = d if closer else best
                            best_q = q if closer else best_q
                        x = pv[best_q]
                ov[i, j] = yv[i, j] - hi * x
    return out
