# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Gaussian splat compositing kernel.

Scalar twin of _splat_np: same signatures, same math, same front-to-back
point order contract. The straight double loop over points and footprint
pixels is what the whole extension exists for.
"""

import numpy as np

from libc.math cimport ceil, exp, floor


cdef inline Py_ssize_t _clamp(Py_ssize_t v, Py_ssize_t lo, Py_ssize_t hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


def forward(double[::1] px, double[::1] py, double[:, ::1] colors, double[::1] opac,
            Py_ssize_t h, Py_ssize_t w, double sigma, double cutoff, double[::1] bg):
    cdef Py_ssize_t m = px.shape[0]
    out_arr = np.zeros((h, w, 4))
    trans_arr = np.ones((h, w))
    cdef double[:, :, ::1] out = out_arr
    cdef double[:, ::1] trans = trans_arr
    cdef double c2 = cutoff * cutoff
    cdef double inv2s2 = 1.0 / (2.0 * sigma * sigma)
    cdef Py_ssize_t i, xx, yy, xlo, xhi, ylo, yhi
    cdef double dx, dy, d2, wgt, t

    for i in range(m):
        xlo = _clamp(<Py_ssize_t>ceil(px[i] - 0.5 - cutoff), 0, w - 1)
        xhi = _clamp(<Py_ssize_t>floor(px[i] - 0.5 + cutoff), 0, w - 1)
        ylo = _clamp(<Py_ssize_t>ceil(py[i] - 0.5 - cutoff), 0, h - 1)
        yhi = _clamp(<Py_ssize_t>floor(py[i] - 0.5 + cutoff), 0, h - 1)
        if px[i] - 0.5 + cutoff < 0 or px[i] - 0.5 - cutoff > w - 1:
            continue
        if py[i] - 0.5 + cutoff < 0 or py[i] - 0.5 - cutoff > h - 1:
            continue
        for yy in range(ylo, yhi + 1):
            dy = yy + 0.5 - py[i]
            for xx in range(xlo, xhi + 1):
                dx = xx + 0.5 - px[i]
                d2 = dx * dx + dy * dy
                if d2 > c2:
                    continue
                wgt = opac[i] * exp(-d2 * inv2s2)
                if wgt <= 0.0:
                    continue
                if wgt > 1.0:
                    wgt = 1.0
                t = trans[yy, xx]
                out[yy, xx, 0] += t * wgt * colors[i, 0]
                out[yy, xx, 1] += t * wgt * colors[i, 1]
                out[yy, xx, 2] += t * wgt * colors[i, 2]
                trans[yy, xx] = t * (1.0 - wgt)

    for yy in range(h):
        for xx in range(w):
            t = trans[yy, xx]
            out[yy, xx, 0] += t * bg[0]
            out[yy, xx, 1] += t * bg[1]
            out[yy, xx, 2] += t * bg[2]
            out[yy, xx, 3] = 1.0 - t
    return out_arr


def backward(double[::1] px, double[::1] py, double[:, ::1] colors, double[::1] opac,
             Py_ssize_t h, Py_ssize_t w, double sigma, double cutoff, double[::1] bg,
             double[:, :, ::1] g_img):
    cdef Py_ssize_t m = px.shape[0]
    g_px_arr = np.zeros(m)
    g_py_arr = np.zeros(m)
    g_col_arr = np.zeros((m, 3))
    g_op_arr = np.zeros(m)
    cdef double[::1] g_px = g_px_arr
    cdef double[::1] g_py = g_py_arr
    cdef double[:, ::1] g_col = g_col_arr
    cdef double[::1] g_op = g_op_arr
    if m == 0:
        return g_px_arr, g_py_arr, g_col_arr, g_op_arr

    cdef Py_ssize_t k = <Py_ssize_t>(2.0 * cutoff) + 1
    trans_arr = np.ones((h, w))
    tpp_arr = np.zeros((m, k, k))          # transmittance in front, per footprint cell
    behind_arr = np.empty((h, w, 3))
    behind_arr[:, :] = np.asarray(bg)
    behind_a_arr = np.zeros((h, w))
    cdef double[:, ::1] trans = trans_arr
    cdef double[:, :, ::1] tpp = tpp_arr
    cdef double[:, :, ::1] behind = behind_arr
    cdef double[:, ::1] behind_a = behind_a_arr

    cdef double c2 = cutoff * cutoff
    cdef double inv2s2 = 1.0 / (2.0 * sigma * sigma)
    cdef double invs2 = 1.0 / (sigma * sigma)
    cdef Py_ssize_t i, xx, yy, xlo, xhi, ylo, yhi
    cdef double dx, dy, d2, gauss, wraw, wgt, t, dldw, tw
    cdef bint live

    # ascending sweep: replay compositing, saving per-cell transmittance
    for i in range(m):
        if px[i] - 0.5 + cutoff < 0 or px[i] - 0.5 - cutoff > w - 1:
            continue
        if py[i] - 0.5 + cutoff < 0 or py[i] - 0.5 - cutoff > h - 1:
            continue
        xlo = _clamp(<Py_ssize_t>ceil(px[i] - 0.5 - cutoff), 0, w - 1)
        xhi = _clamp(<Py_ssize_t>floor(px[i] - 0.5 + cutoff), 0, w - 1)
        ylo = _clamp(<Py_ssize_t>ceil(py[i] - 0.5 - cutoff), 0, h - 1)
        yhi = _clamp(<Py_ssize_t>floor(py[i] - 0.5 + cutoff), 0, h - 1)
        for yy in range(ylo, yhi + 1):
            dy = yy + 0.5 - py[i]
            for xx in range(xlo, xhi + 1):
                dx = xx + 0.5 - px[i]
                d2 = dx * dx + dy * dy
                if d2 > c2:
                    continue
                wgt = opac[i] * exp(-d2 * inv2s2)
                if wgt <= 0.0:
                    continue
                if wgt > 1.0:
                    wgt = 1.0
                t = trans[yy, xx]
                tpp[i, yy - ylo, xx - xlo] = t
                trans[yy, xx] = t * (1.0 - wgt)

    # descending sweep: behind-composite accumulators give the w-gradient
    for i in range(m - 1, -1, -1):
        if px[i] - 0.5 + cutoff < 0 or px[i] - 0.5 - cutoff > w - 1:
            continue
        if py[i] - 0.5 + cutoff < 0 or py[i] - 0.5 - cutoff > h - 1:
            continue
        xlo = _clamp(<Py_ssize_t>ceil(px[i] - 0.5 - cutoff), 0, w - 1)
        xhi = _clamp(<Py_ssize_t>floor(px[i] - 0.5 + cutoff), 0, w - 1)
        ylo = _clamp(<Py_ssize_t>ceil(py[i] - 0.5 - cutoff), 0, h - 1)
        yhi = _clamp(<Py_ssize_t>floor(py[i] - 0.5 + cutoff), 0, h - 1)
        for yy in range(ylo, yhi + 1):
            dy = yy + 0.5 - py[i]
            for xx in range(xlo, xhi + 1):
                dx = xx + 0.5 - px[i]
                d2 = dx * dx + dy * dy
                if d2 > c2:
                    continue
                gauss = exp(-d2 * inv2s2)
                wraw = opac[i] * gauss
                if wraw <= 0.0:
                    continue
                live = wraw < 1.0
                wgt = wraw if wraw < 1.0 else 1.0
                t = tpp[i, yy - ylo, xx - xlo]
                dldw = t * (
                    (colors[i, 0] - behind[yy, xx, 0]) * g_img[yy, xx, 0]
                    + (colors[i, 1] - behind[yy, xx, 1]) * g_img[yy, xx, 1]
                    + (colors[i, 2] - behind[yy, xx, 2]) * g_img[yy, xx, 2]
                    + (1.0 - behind_a[yy, xx]) * g_img[yy, xx, 3]
                )
                tw = t * wgt
                g_col[i, 0] += tw * g_img[yy, xx, 0]
                g_col[i, 1] += tw * g_img[yy, xx, 1]
                g_col[i, 2] += tw * g_img[yy, xx, 2]
                if live:
                    g_op[i] += dldw * gauss
                    g_px[i] += dldw * wraw * dx * invs2
                    g_py[i] += dldw * wraw * dy * invs2
                behind[yy, xx, 0] = wgt * colors[i, 0] + (1.0 - wgt) * behind[yy, xx, 0]
                behind[yy, xx, 1] = wgt * colors[i, 1] + (1.0 - wgt) * behind[yy, xx, 1]
                behind[yy, xx, 2] = wgt * colors[i, 2] + (1.0 - wgt) * behind[yy, xx, 2]
                behind_a[yy, xx] = wgt + (1.0 - wgt) * behind_a[yy, xx]
    return g_px_arr, g_py_arr, g_col_arr, g_op_arr
