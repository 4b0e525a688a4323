"""Differentiable soft-splat rendering of point clouds.

render() projects a cloud through an orthographic camera and composites
each point as a Gaussian footprint, front to back:

    w_i = opacity_i * exp(-d^2 / (2 sigma^2))        d in pixels
    C   = sum_i w_i c_i prod_{j<i} (1 - w_j)         then blended over bg
    A   = 1 - prod_i (1 - w_i)

The result is a graph Tensor: gradients flow to point colors, opacities,
and positions (positions through the Gaussian distance only; the depth
sort is treated as locally constant). Two interchangeable kernels exist:
a compiled Cython loop and a vectorized numpy fallback, selected at
import, overridable via IMPLICIT_FORGE_SPLAT_KERNEL={compiled,numpy}.
"""

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import geometry as geo
from . import _splat_np
from .autodiff import ContractViolation
from .geometry import Camera, PointCloud

try:
    from . import _splat_cy
except ImportError:
    _splat_cy = None


def _select_kernel():
    choice = os.environ.get("IMPLICIT_FORGE_SPLAT_KERNEL", "").strip().lower()
    if choice == "numpy":
        return _splat_np, False
    if choice == "compiled":
        if _splat_cy is None:
            raise ImportError(
                "IMPLICIT_FORGE_SPLAT_KERNEL=compiled but the _splat_cy extension is not built"
            )
        return _splat_cy, True
    if _splat_cy is not None:
        return _splat_cy, True
    return _splat_np, False


_KERNEL, USING_COMPILED_KERNEL = _select_kernel()


def kernel_name() -> str:
    return "compiled" if USING_COMPILED_KERNEL else "numpy"


@dataclass(frozen=True)
class SplatConfig:
    sigma_px: float = 0.22
    cutoff_px: float = 0.66
    background_rgb: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.sigma_px <= 0:
            raise ContractViolation("sigma_px must be positive")
        if self.cutoff_px < 2.0 * self.sigma_px:
            raise ContractViolation("cutoff_px must be at least 2*sigma_px")


@dataclass
class RenderedView:
    camera: Camera
    image: ad.Tensor  # (H, W, 4); rgb in [...,:3], soft silhouette in [...,3]


def _as_tensor(x) -> ad.Tensor:
    return x if isinstance(x, ad.Tensor) else ad.Tensor(np.asarray(x, dtype=np.float64))


def render(cloud: PointCloud, camera: Camera, cfg: Optional[SplatConfig] = None) -> RenderedView:
    if cfg is None:
        cfg = SplatConfig()
    pos = _as_tensor(cloud.positions)
    col = _as_tensor(cloud.colors)
    if cloud.opacities is None:
        opac = ad.Tensor(np.ones(len(cloud)))
    else:
        opac = _as_tensor(cloud.opacities)

    h, w = camera.height, camera.width
    bg = np.asarray(cfg.background_rgb, dtype=np.float64)
    m = pos.shape[0] if pos.data.ndim == 2 else 0
    if m == 0:
        img = np.empty((h, w, 4))
        img[..., :3] = bg
        img[..., 3] = 0.0
        return RenderedView(camera=camera, image=ad.Tensor(img))

    rot = geo.view_matrix(camera)
    view = pos.data @ rot.T
    px, py, depth = geo.view_to_pixels(view, camera)
    order = geo.depth_order(depth)
    spx = np.ascontiguousarray(px[order])
    spy = np.ascontiguousarray(py[order])
    scol = np.ascontiguousarray(col.data[order])
    sop = np.ascontiguousarray(opac.data[order])

    img = _KERNEL.forward(spx, spy, scol, sop, h, w, cfg.sigma_px, cfg.cutoff_px, bg)

    kx = w / (2.0 * camera.ortho_scale)
    ky = h / (2.0 * camera.ortho_scale)

    def vjp(g):
        g = np.ascontiguousarray(g)
        gpx, gpy, gcol, gop = _KERNEL.backward(
            spx, spy, scol, sop, h, w, cfg.sigma_px, cfg.cutoff_px, bg, g
        )
        g_col = np.empty_like(gcol)
        g_col[order] = gcol
        g_op = np.empty_like(gop)
        g_op[order] = gop
        g_view = np.empty((m, 3))
        g_view[order, 0] = gpx * kx
        g_view[order, 1] = -gpy * ky
        g_view[order, 2] = 0.0
        return (g_view @ rot, g_col, g_op)

    out = ad._node(img, (pos, col, opac), vjp, "splat")
    return RenderedView(camera=camera, image=out)


def render_fixed_views(cloud: PointCloud, image_size=(64, 64), cfg: Optional[SplatConfig] = None,
                       ortho_scale: float = 1.2):
    """The three consistency views: azimuths 0, pi/2, pi at elevation 0."""
    cfg = cfg if cfg is not None else SplatConfig()
    return [
        render(cloud, geo.camera_for_azimuth(a, image_size, ortho_scale), cfg)
        for a in geo.FIXED_VIEW_AZIMUTHS
    ]


def render_grad_check(cloud: PointCloud, camera: Camera, cfg: SplatConfig,
                      target: np.ndarray, h: float = 1e-5) -> float:
    """Finite-difference check of MSE(render, target) gradients.

    Perturbs every color and position coordinate of the cloud (intended
    for clouds of at most ~10 points) and returns the worst relative
    error against the analytic gradients.
    """
    if len(cloud) > 10:
        raise ContractViolation("grad check is for small clouds (<= 10 points)")
    target_t = ad.Tensor(np.asarray(target, dtype=np.float64))
    opac = cloud.opacities

    def f(pos, col):
        view = render(PointCloud(pos, col, opac, cloud.radius), camera, cfg)
        return ad.reduce_mean(ad.square(view.image - target_t))

    pos0 = _as_tensor(cloud.positions).data.copy()
    col0 = _as_tensor(cloud.colors).data.copy()
    return ad.grad_check(f, [ad.Tensor(pos0), ad.Tensor(col0)], h=h)
