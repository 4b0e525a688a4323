"""Orthographic camera model, point projection, and mesh/point-cloud types.

All scene content lives in the canonical box [-1, 1]^3. A camera is a
rotation of the world about the +y axis followed by an orthographic map
onto the image plane: view coordinates are world coordinates rotated by
-azimuth about y (then pitched by -elevation about view x), the image
plane is view xy, and view z is depth with larger values nearer the
camera. Azimuth 0 looks at the front of the scene; azimuth pi/2 views
from +x. Elevation stays 0 throughout the pipeline.

Pixel coordinates have x growing right and y growing down, with the
center of pixel (i, j) at (i + 0.5, j + 0.5). A view-space point maps to

    px = (vx / ortho_scale + 1) / 2 * width
    py = (1 - vy / ortho_scale) / 2 * height
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autodiff import ContractViolation


@dataclass(frozen=True)
class Camera:
    azimuth: float = 0.0
    elevation: float = 0.0
    ortho_scale: float = 1.2
    width: int = 64
    height: int = 64

    def __post_init__(self):
        if self.ortho_scale <= 0:
            raise ContractViolation("ortho_scale must be positive")
        if self.width < 8 or self.height < 8:
            raise ContractViolation("image extents must be at least 8 px")

    @property
    def image_size(self):
        return (self.width, self.height)


def camera_for_azimuth(azimuth: float, image_size=(64, 64), ortho_scale: float = 1.2) -> Camera:
    """Camera orbiting the origin at elevation 0."""
    w, h = image_size
    return Camera(azimuth=azimuth, elevation=0.0, ortho_scale=ortho_scale, width=w, height=h)


FIXED_VIEW_AZIMUTHS = (0.0, np.pi / 2.0, np.pi)


def rotation_y(angle: float) -> np.ndarray:
    """Right-handed rotation about +y by angle (radians)."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([
        [c, 0.0, s],
        [0.0, 1.0, 0.0],
        [-s, 0.0, c],
    ])


def rotation_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([
        [1.0, 0.0, 0.0],
        [0.0, c, -s],
        [0.0, s, c],
    ])


def view_matrix(camera: Camera) -> np.ndarray:
    """World-to-view rotation R; view = R @ world."""
    r = rotation_y(-camera.azimuth)
    if camera.elevation != 0.0:
        r = rotation_x(-camera.elevation) @ r
    return r


def world_to_view(points: np.ndarray, camera: Camera) -> np.ndarray:
    """Rotate world points (N, 3) into the camera's view frame."""
    points = np.asarray(points, dtype=np.float64)
    return points @ view_matrix(camera).T


def view_to_pixels(view: np.ndarray, camera: Camera):
    """Map view-space points (N, 3) to pixel coordinates and depth.

    Returns (px, py, depth) as flat float64 arrays. Depth is view z;
    larger is nearer.
    """
    vx, vy, vz = view[:, 0], view[:, 1], view[:, 2]
    px = (vx / camera.ortho_scale + 1.0) * 0.5 * camera.width
    py = (1.0 - vy / camera.ortho_scale) * 0.5 * camera.height
    return px, py, vz


def project(camera: Camera, points: np.ndarray):
    """World points (N, 3) or a single (3,) point to (px, py, depth)."""
    points = np.asarray(points, dtype=np.float64)
    single = points.ndim == 1
    px, py, z = view_to_pixels(world_to_view(points.reshape(-1, 3), camera), camera)
    if single:
        return float(px[0]), float(py[0]), float(z[0])
    return px, py, z


def depth_order(depth: np.ndarray) -> np.ndarray:
    """Indices sorting points front to back (descending depth, stable)."""
    return np.argsort(-np.asarray(depth, dtype=np.float64), kind="stable")


def pixel_centers(camera: Camera):
    """Pixel-center coordinate grids, each shaped (height, width)."""
    xs = np.arange(camera.width) + 0.5
    ys = np.arange(camera.height) + 0.5
    return np.meshgrid(xs, ys)


@dataclass
class PointCloud:
    """Splat-renderable points: positions/colors row-aligned, one radius.

    positions and colors may be graph Tensors (from the implicit field)
    or plain arrays (ground-truth clouds); opacities default to fully
    opaque. radius is world-unit footprint metadata carried with the
    cloud; the renderer's screen-space footprint is set by SplatConfig.
    """

    positions: object
    colors: object
    opacities: Optional[object] = None
    radius: float = 0.02

    def __post_init__(self):
        if self.radius <= 0:
            raise ContractViolation("radius must be positive")
        if len(self) != _rows(self.colors):
            raise ContractViolation("positions and colors must have matching counts")
        if self.opacities is not None and _rows(self.opacities) != len(self):
            raise ContractViolation("opacities count must match positions")

    def __len__(self):
        return _rows(self.positions)


def _rows(a) -> int:
    data = getattr(a, "data", a)
    return int(np.asarray(data).shape[0])


@dataclass
class Mesh:
    vertices: np.ndarray            # (V, 3) float64
    triangles: np.ndarray           # (T, 3) int indices
    colors: Optional[np.ndarray] = None  # (V, 3) in [0,1]

    def validate(self):
        if len(self.triangles) and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise ContractViolation("triangle index out of range")
        for tri in self.triangles:
            if len(set(int(i) for i in tri)) != 3:
                raise ContractViolation(f"degenerate triangle {tri}")
        if self.colors is not None and len(self.colors) != len(self.vertices):
            raise ContractViolation("per-vertex colors must match vertex count")
        return self
