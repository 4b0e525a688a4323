"""Training data: synthetic samples rendered from procedural shapes, plus
ingestion of real (image, mask) pairs for fine-tuning.

On-disk layout under a dataset directory:
    shapes.json                manifest: generation parameters + per-shape seeds
    NNN_input.png              input view (azimuth 0)
    NNN_view0.png / NNN_view90.png / NNN_view180.png   ground-truth views
    NNN_queries.bin            occupancy queries, little-endian:
                               uint32 count, then count * (3 float64 xyz + uint8 label)
"""

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from . import images
from .geometry import PointCloud
from .shapes import ProceduralShape, catalog, sample_queries, surface_points
from .splat import SplatConfig, render_fixed_views

N_CLOUD_POINTS = 30000  # dense enough that silhouettes close at the default SplatConfig


@dataclass
class TrainingSample:
    name: str
    input_image: np.ndarray  # (h, w, 4) float in [0,1]
    gt_views: tuple = ()  # three (h, w, 4) arrays at azimuths 0, 90, 180 deg
    query_points: Optional[np.ndarray] = None  # (n, 3)
    query_labels: Optional[np.ndarray] = None  # (n,) of {0.0, 1.0}


def shape_cloud(shape: ProceduralShape, n_points: int, seed) -> PointCloud:
    """Dense opaque surface cloud used for ground-truth rendering."""
    rng = np.random.default_rng(seed)
    pos, col = surface_points(shape, n_points, rng)
    return PointCloud(positions=pos, colors=col, opacities=np.ones(len(pos)))


def render_ground_truth(
    shape: ProceduralShape,
    image_size: Tuple[int, int] = (64, 64),
    cfg: Optional[SplatConfig] = None,
    n_points: int = N_CLOUD_POINTS,
    seed=0,
) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Input view plus the three fixed ground-truth views of a shape.

    The cloud is splatted with the same SplatConfig the trainer uses, so
    rendered reconstructions are commensurable with these targets.  The
    input view is the azimuth-0 render.
    """
    cloud = shape_cloud(shape, n_points, seed)
    views = [rv.image.data for rv in render_fixed_views(cloud, image_size=image_size, cfg=cfg)]
    return views[0].copy(), views


def save_queries(path, points: np.ndarray, labels: np.ndarray) -> None:
    points = np.asarray(points, dtype="<f8")
    labels = np.asarray(labels)
    rec = struct.Struct("<dddB")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(points)))
        for i in range(len(points)):
            fh.write(rec.pack(points[i, 0], points[i, 1], points[i, 2], int(labels[i])))


def load_queries(path) -> Tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    (count,) = struct.unpack_from("<I", blob, 0)
    rec = struct.Struct("<dddB")
    if len(blob) != 4 + count * rec.size:
        raise IOError("corrupt query file %r" % str(path))
    pts = np.empty((count, 3))
    labels = np.empty(count)
    for i in range(count):
        x, y, z, l = rec.unpack_from(blob, 4 + i * rec.size)
        pts[i] = (x, y, z)
        labels[i] = l
    return pts, labels


def generate_dataset(
    out_dir,
    shapes: Optional[List[ProceduralShape]] = None,
    seed: int = 0,
    image_size: Tuple[int, int] = (64, 64),
    n_points: int = N_CLOUD_POINTS,
    n_uniform: int = 128,
    n_surface: int = 384,
    noise_sd: float = 0.05,
    cfg: Optional[SplatConfig] = None,
) -> dict:
    """Write the full dataset; returns the manifest dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if shapes is None:
        shapes = catalog()
    manifest = {
        "seed": seed,
        "image_size": list(image_size),
        "n_points": n_points,
        "n_uniform": n_uniform,
        "n_surface": n_surface,
        "noise_sd": noise_sd,
        "shapes": [],
    }
    for i, shape in enumerate(shapes):
        cloud_seed = seed * 1000 + 2 * i
        query_seed = seed * 1000 + 2 * i + 1
        manifest["shapes"].append(
            {"id": i, "name": shape.name, "cloud_seed": cloud_seed, "query_seed": query_seed}
        )
        inp, views = render_ground_truth(shape, image_size, cfg, n_points, cloud_seed)
        images.save_rgba(out / ("%03d_input.png" % i), inp)
        for deg, img in zip((0, 90, 180), views):
            images.save_rgba(out / ("%03d_view%d.png" % (i, deg)), img)
        pts, labels = sample_queries(shape, n_uniform, n_surface, noise_sd, query_seed)
        save_queries(out / ("%03d_queries.bin" % i), pts, labels)
    with open(out / "shapes.json", "w", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_dataset(data_dir) -> List[TrainingSample]:
    root = Path(data_dir)
    mpath = root / "shapes.json"
    if not mpath.exists():
        raise IOError("no shapes.json manifest in %r" % str(root))
    with open(mpath) as fh:
        manifest = json.load(fh)
    samples = []
    for entry in manifest["shapes"]:
        i = entry["id"]
        inp = images.load_rgba(root / ("%03d_input.png" % i))
        views = tuple(images.load_rgba(root / ("%03d_view%d.png" % (i, deg))) for deg in (0, 90, 180))
        pts, labels = load_queries(root / ("%03d_queries.bin" % i))
        samples.append(
            TrainingSample(
                name=entry["name"],
                input_image=inp,
                gt_views=views,
                query_points=pts,
                query_labels=labels,
            )
        )
    if not samples:
        raise IOError("dataset %r lists no shapes" % str(root))
    return samples


def load_real_sample(image_path, mask_path) -> TrainingSample:
    """Single-view sample from a real image and its silhouette mask.

    RGB comes from the image, alpha from the binarized mask (>0.5), and
    background RGB is zeroed so splat losses see a clean background.
    """
    img = images.load_rgba(image_path)
    mask_img = images.load_rgba(mask_path)
    if img.shape[:2] != mask_img.shape[:2]:
        raise IOError(
            "image %r and mask %r extents differ: %r vs %r"
            % (str(image_path), str(mask_path), img.shape[:2], mask_img.shape[:2])
        )
    fg = mask_img[:, :, :3].mean(axis=2) > 0.5
    out = np.zeros_like(img)
    out[:, :, :3] = img[:, :, :3] * fg[:, :, None]
    out[:, :, 3] = fg.astype(np.float64)
    return TrainingSample(name=Path(image_path).stem, input_image=out)
