"""Pure-numpy Gaussian splat compositing kernel.

Fallback lane for the compiled kernel in _splat_cy; identical math and
identical signatures. Points arrive pre-sorted front to back. Per pixel,
compositing is sequential in that order; across pixels it is independent,
which is what the vectorization exploits: point/pixel contribution pairs
are ranked by their position in each pixel's queue, and all pairs of
equal rank (one per pixel at most) are composited in a single vector
step.

The backward pass is division-free: an ascending sweep replays the
per-pair transmittance, then a descending sweep accumulates the color
and alpha composited *behind* each pair, giving

    dL/dw_i = T_i * ((c_i - behind_rgb) . g_rgb + (1 - behind_alpha) * g_alpha)

with position gradients flowing through the Gaussian distance only.
"""

import numpy as np


def _pairs(px, py, h, w, cutoff):
    """All (point, covered-pixel) pairs: footprint boxes culled to the cutoff disk."""
    m = px.size
    k = int(2.0 * cutoff) + 1
    x0 = np.ceil(px - 0.5 - cutoff).astype(np.int64)
    y0 = np.ceil(py - 0.5 - cutoff).astype(np.int64)
    offs = np.arange(k, dtype=np.int64)
    xs = x0[:, None, None] + offs[None, None, :]      # (m, 1, k)
    ys = y0[:, None, None] + offs[None, :, None]      # (m, k, 1)
    dx = xs + 0.5 - px[:, None, None]                 # pixel center minus splat center
    dy = ys + 0.5 - py[:, None, None]
    d2 = dx * dx + dy * dy                            # (m, k, k)
    ok = (d2 <= cutoff * cutoff) & (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    shape = ok.shape
    pt = np.broadcast_to(np.arange(m, dtype=np.int64)[:, None, None], shape)[ok]
    pix = np.broadcast_to(ys, shape)[ok] * w + np.broadcast_to(xs, shape)[ok]
    return pt, pix, np.broadcast_to(dx, shape)[ok], np.broadcast_to(dy, shape)[ok], d2[ok]


def _layers(pt, pix):
    """Order pairs into per-pixel-queue-rank layers.

    Returns (lorder, bounds): lorder[bounds[l]:bounds[l+1]] indexes the
    pairs of rank l, at most one per pixel, front to back as l grows.
    """
    n = pt.size
    order = np.lexsort((pt, pix))
    spix = pix[order]
    newgrp = np.empty(n, dtype=bool)
    newgrp[0] = True
    newgrp[1:] = spix[1:] != spix[:-1]
    gstart = np.maximum.accumulate(np.where(newgrp, np.arange(n), 0))
    rank = np.arange(n) - gstart
    lorder = order[np.argsort(rank, kind="stable")]
    bounds = np.concatenate([[0], np.cumsum(np.bincount(rank))])
    return lorder, bounds


def forward(px, py, colors, opac, h, w, sigma, cutoff, bg):
    """Composite sorted splats into an (h, w, 4) RGBA image over bg."""
    rgb = np.zeros((h * w, 3))
    t_img = np.ones(h * w)
    if px.size:
        pt, pix, _, _, d2 = _pairs(px, py, h, w, cutoff)
        if pt.size:
            wgt = np.clip(opac[pt] * np.exp(-d2 / (2.0 * sigma * sigma)), 0.0, 1.0)
            lorder, bounds = _layers(pt, pix)
            for a, b in zip(bounds[:-1], bounds[1:]):
                s = lorder[a:b]
                ps = pix[s]
                t = t_img[ps]
                rgb[ps] += (t * wgt[s])[:, None] * colors[pt[s]]
                t_img[ps] = t * (1.0 - wgt[s])
    out = np.empty((h, w, 4))
    out[..., :3] = (rgb + t_img[:, None] * bg[None, :]).reshape(h, w, 3)
    out[..., 3] = (1.0 - t_img).reshape(h, w)
    return out


def backward(px, py, colors, opac, h, w, sigma, cutoff, bg, g_img):
    """Gradients of sum(g_img * image) w.r.t. px, py, colors, opacities."""
    m = px.size
    g_px = np.zeros(m)
    g_py = np.zeros(m)
    g_col = np.zeros((m, 3))
    g_op = np.zeros(m)
    if m == 0:
        return g_px, g_py, g_col, g_op
    pt, pix, dx, dy, d2 = _pairs(px, py, h, w, cutoff)
    if pt.size == 0:
        return g_px, g_py, g_col, g_op

    gauss = np.exp(-d2 / (2.0 * sigma * sigma))
    wraw = opac[pt] * gauss
    wgt = np.clip(wraw, 0.0, 1.0)
    live = (wraw > 0.0) & (wraw < 1.0)       # clip is a dead zone for w-gradients
    lorder, bounds = _layers(pt, pix)

    # ascending: transmittance in front of each pair
    t_img = np.ones(h * w)
    t_pp = np.empty(pt.size)
    spans = list(zip(bounds[:-1], bounds[1:]))
    for a, b in spans:
        s = lorder[a:b]
        ps = pix[s]
        t_pp[s] = t_img[ps]
        t_img[ps] *= 1.0 - wgt[s]

    # descending: color/alpha composited behind each pair
    g_rgb = np.ascontiguousarray(g_img[..., :3]).reshape(h * w, 3)
    g_a = np.ascontiguousarray(g_img[..., 3]).reshape(h * w)
    behind = np.broadcast_to(bg, (h * w, 3)).copy()
    behind_a = np.zeros(h * w)
    dldw = np.empty(pt.size)
    for a, b in reversed(spans):
        s = lorder[a:b]
        ps = pix[s]
        ci = colors[pt[s]]
        dldw[s] = t_pp[s] * (
            ((ci - behind[ps]) * g_rgb[ps]).sum(axis=1)
            + (1.0 - behind_a[ps]) * g_a[ps]
        )
        k = wgt[s][:, None]
        behind[ps] = k * ci + (1.0 - k) * behind[ps]
        behind_a[ps] = wgt[s] + (1.0 - wgt[s]) * behind_a[ps]

    tw = t_pp * wgt
    for ch in range(3):
        g_col[:, ch] = np.bincount(pt, weights=tw * g_rgb[pix, ch], minlength=m)
    dldw *= live
    g_op[:] = np.bincount(pt, weights=dldw * gauss, minlength=m)
    coeff = dldw * wraw / (sigma * sigma)
    g_px[:] = np.bincount(pt, weights=coeff * dx, minlength=m)
    g_py[:] = np.bincount(pt, weights=coeff * dy, minlength=m)
    return g_px, g_py, g_col, g_op
