"""Pixel-aligned implicit field: image encoder plus occupancy and texture heads.

A query point is projected into the input view, a 32-d feature is sampled
bilinearly from the encoded feature grid at that pixel, and the feature
concatenated with the view depth feeds two small MLPs:

    occupancy(x) = sigmoid(MLP_o(feat(pi(x)) ++ z))   in (0,1)
    color(x)     = sigmoid(MLP_t(feat(pi(x)) ++ z))   in (0,1)^3

The encoder is four 3x3 convolutions (3->16->16->32->32, strides
2,1,2,1, zero padding, relu), so the grid is input/4 on each side.
Feature-grid coordinates place cell (u, v) at input pixel (4u+2, 4v+2).

extract_point_cloud keeps the render loss differentiable despite hard
thresholding: selected lattice points are constants, but each carries
its occupancy as the splat opacity and its predicted color, both live
graph values ("soft selection").
"""

from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from . import geometry as geo
from .geometry import PointCloud

ENCODER_PLAN = (
    # (c_in, c_out, stride)
    (3, 16, 2),
    (16, 16, 1),
    (16, 32, 2),
    (32, 32, 1),
)
FEAT_DIM = 32
HIDDEN = 64


@dataclass
class ImplicitFieldParams:
    conv0_w: ad.Tensor
    conv0_b: ad.Tensor
    conv1_w: ad.Tensor
    conv1_b: ad.Tensor
    conv2_w: ad.Tensor
    conv2_b: ad.Tensor
    conv3_w: ad.Tensor
    conv3_b: ad.Tensor
    occ0_w: ad.Tensor
    occ0_b: ad.Tensor
    occ1_w: ad.Tensor
    occ1_b: ad.Tensor
    occ2_w: ad.Tensor
    occ2_b: ad.Tensor
    tex0_w: ad.Tensor
    tex0_b: ad.Tensor
    tex1_w: ad.Tensor
    tex1_b: ad.Tensor
    tex2_w: ad.Tensor
    tex2_b: ad.Tensor

    def named(self):
        """(name, Tensor) pairs in declaration order — the canonical order."""
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def tensors(self):
        return [t for _, t in self.named()]

    def groups(self):
        """Parameter names bucketed by subnetwork."""
        return {
            "encoder": [n for n, _ in self.named() if n.startswith("conv")],
            "occupancy": [n for n, _ in self.named() if n.startswith("occ")],
            "texture": [n for n, _ in self.named() if n.startswith("tex")],
        }


def _mlp_shapes(out_dim):
    return [
        ((FEAT_DIM + 1, HIDDEN), (HIDDEN,)),
        ((HIDDEN, HIDDEN), (HIDDEN,)),
        ((HIDDEN, out_dim), (out_dim,)),
    ]


def init_params(seed: int) -> ImplicitFieldParams:
    """Uniform(-s, s) init with s = 1/sqrt(fan_in), one PCG64 stream."""
    rng = np.random.Generator(np.random.PCG64(seed))
    made = {}

    def uni(shape, fan_in):
        s = 1.0 / np.sqrt(fan_in)
        t = ad.Tensor(rng.uniform(-s, s, shape))
        t.requires_grad = True
        return t

    for i, (c_in, c_out, _) in enumerate(ENCODER_PLAN):
        made[f"conv{i}_w"] = uni((c_out, c_in, 3, 3), c_in * 9)
        made[f"conv{i}_b"] = uni((c_out,), c_in * 9)
    for head, out_dim in (("occ", 1), ("tex", 3)):
        for i, (wshape, bshape) in enumerate(_mlp_shapes(out_dim)):
            made[f"{head}{i}_w"] = uni(wshape, wshape[0])
            made[f"{head}{i}_b"] = uni(bshape, wshape[0])
    return ImplicitFieldParams(**made)


def _image_tensor(image) -> ad.Tensor:
    if isinstance(image, ad.Tensor):
        return image
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] < 3:
        raise ad.ContractViolation(f"expected an (H, W, >=3) image, got {arr.shape}")
    return ad.Tensor(arr[..., :3])


def encode_image(params: ImplicitFieldParams, image) -> ad.Tensor:
    """Image (H, W, >=3) -> feature grid Tensor (H/4, W/4, 32)."""
    x = _image_tensor(image)
    h, w, _ = x.shape
    if h % 4 or w % 4:
        raise ad.ContractViolation(f"image extents must be divisible by 4, got {h}x{w}")
    convs = [
        (params.conv0_w, params.conv0_b),
        (params.conv1_w, params.conv1_b),
        (params.conv2_w, params.conv2_b),
        (params.conv3_w, params.conv3_b),
    ]
    for (wt, bt), (_, _, stride) in zip(convs, ENCODER_PLAN):
        x = ad.relu(ad.conv2d(x, wt, bt, stride=stride))
    return x


def sample_feature(grid: ad.Tensor, px, py) -> ad.Tensor:
    """Bilinear features at input-image pixel coordinates; outside -> zeros."""
    px = np.atleast_1d(np.asarray(px, dtype=np.float64))
    py = np.atleast_1d(np.asarray(py, dtype=np.float64))
    return ad.grid_sample(grid, px / 4.0 - 0.5, py / 4.0 - 0.5)


def _default_camera(image_shape) -> geo.Camera:
    h, w = image_shape[0], image_shape[1]
    return geo.camera_for_azimuth(0.0, (w, h))


def _head(features: ad.Tensor, depth: np.ndarray, layers) -> ad.Tensor:
    z = ad.Tensor(depth.reshape(-1, 1))
    x = ad.concat_cols(features, z)
    (w0, b0), (w1, b1), (w2, b2) = layers
    x = ad.relu(ad.add_bias(ad.matmul(x, w0), b0))
    x = ad.relu(ad.add_bias(ad.matmul(x, w1), b1))
    return ad.sigmoid(ad.add_bias(ad.matmul(x, w2), b2))


def _project_features(params, image, points, camera, grid=None):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    camera = camera or _default_camera(np.asarray(getattr(image, "data", image)).shape)
    if grid is None:
        grid = encode_image(params, image)
    px, py, depth = geo.project(camera, points)
    return sample_feature(grid, px, py), depth


def predict_occupancy(params, image, points, camera=None, grid=None) -> ad.Tensor:
    """Inside probability for one (3,) point or a batch (N, 3); Tensor (N, 1)."""
    feats, depth = _project_features(params, image, points, camera, grid)
    layers = [(params.occ0_w, params.occ0_b), (params.occ1_w, params.occ1_b),
              (params.occ2_w, params.occ2_b)]
    return _head(feats, depth, layers)


def predict_color(params, image, points, camera=None, grid=None) -> ad.Tensor:
    """RGB in (0,1)^3 for one point or a batch; Tensor (N, 3)."""
    feats, depth = _project_features(params, image, points, camera, grid)
    layers = [(params.tex0_w, params.tex0_b), (params.tex1_w, params.tex1_b),
              (params.tex2_w, params.tex2_b)]
    return _head(feats, depth, layers)


def lattice(grid_res: int) -> np.ndarray:
    """The grid_res^3 inclusive query lattice over [-1,1]^3, z varying fastest."""
    ax = np.linspace(-1.0, 1.0, grid_res)
    gx, gy, gz = np.meshgrid(ax, ax, ax, indexing="ij")
    return np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)


def extract_point_cloud(params, image, grid_res: int = 64, threshold: float = 0.5,
                        camera=None, radius: float = 0.02, grid=None) -> PointCloud:
    """Lattice points with occupancy strictly above threshold, soft-selected.

    Positions are plain arrays (constants); colors and opacities are graph
    Tensors, so render losses backpropagate into both heads. Empty result
    is a valid cloud that renders as pure background. Pass a precomputed
    feature grid to avoid re-encoding the image.
    """
    if grid_res < 8:
        raise ad.ContractViolation("grid_res must be at least 8")
    pts = lattice(grid_res)
    if grid is None:
        grid = encode_image(params, image)
    occ = predict_occupancy(params, image, pts, camera=camera, grid=grid)
    sel = np.flatnonzero(occ.data.reshape(-1) > threshold)
    if sel.size == 0:
        return PointCloud(np.zeros((0, 3)), np.zeros((0, 3)),
                          np.zeros(0), radius)
    positions = pts[sel]
    opacities = ad.reshape(ad.gather_rows(occ, sel), (sel.size,))
    colors = predict_color(params, image, positions, camera=camera, grid=grid)
    return PointCloud(positions, colors, opacities, radius)
