"""implicit-forge: single-image 3D reconstruction with a differentiable splat renderer.

A pixel-aligned implicit occupancy/texture field is trained in two
stages — supervised on procedural shapes, then self-supervised on masked
images via multi-view render consistency — and surfaced with marching
cubes at inference.
"""

__version__ = "0.1.0"

from .autodiff import Tensor, backward, grad_check
from .geometry import Camera, Mesh, PointCloud, camera_for_azimuth, project
from .splat import RenderedView, SplatConfig, render, render_fixed_views

__all__ = [
    "Tensor",
    "backward",
    "grad_check",
    "Camera",
    "Mesh",
    "PointCloud",
    "camera_for_azimuth",
    "project",
    "RenderedView",
    "SplatConfig",
    "render",
    "render_fixed_views",
    "__version__",
]
