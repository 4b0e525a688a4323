"""Two-stage training orchestration and single-view reconstruction.

Stage 1 fits the field to synthetic samples: occupancy BCE on labeled
queries plus a multi-view render consistency term.  Stage 2 fine-tunes on
masked single-view images with silhouette + masked-color losses rendered
from the canonical input camera.
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .adam import Adam
from .config import TrainingConfig
from .dataset import TrainingSample
from .field import (
    ImplicitFieldParams,
    encode_image,
    extract_point_cloud,
    init_params,
    lattice,
    predict_color,
    predict_occupancy,
)
from .geometry import Mesh, PointCloud, camera_for_azimuth
from .losses import loss_masked_image, loss_multiview, loss_occupancy
from .marching import ScalarGrid, marching_cubes
from .splat import render, render_fixed_views

CSV_HEADER = "epoch,loss_occ,loss_mv,total"


class TrainingError(RuntimeError):
    pass


def _check_finite(value: float, stage: str, epoch: int, name: str) -> None:
    if not np.isfinite(value):
        raise TrainingError(
            "%s diverged at epoch %d on sample %r (loss=%r)" % (stage, epoch, name, value)
        )


def train_stage1(
    samples: Sequence[TrainingSample],
    config: TrainingConfig,
    epochs: Optional[int] = None,
) -> Tuple[ImplicitFieldParams, List[tuple]]:
    """Supervised stage over synthetic samples.

    Per sample: L = BCE(occupancy at labeled queries) + lambda_mv * mean
    squared error between the three fixed-view renders of the extracted
    cloud and the ground-truth views.  Returns the trained parameters and
    one (epoch, loss_occ, loss_mv, total) row per epoch.
    """
    if not samples:
        raise ad.ContractViolation("stage 1 needs a non-empty dataset")
    n_epochs = config.stage1_epochs if epochs is None else epochs
    params = init_params(config.seed)
    named = dict(params.named())
    opt = Adam()
    size = (config.image_size, config.image_size)
    rows = []
    steps = 0
    capped = False
    for epoch in range(n_epochs):
        occ_sum = mv_sum = tot_sum = 0.0
        seen = 0
        for sample in samples:
            if config.max_steps_stage1 and steps >= config.max_steps_stage1:
                capped = True
                break
            grid = encode_image(params, sample.input_image)
            occ = predict_occupancy(params, sample.input_image, sample.query_points, grid=grid)
            l_occ = loss_occupancy(occ, sample.query_labels)
            cloud = extract_point_cloud(
                params, sample.input_image, grid_res=config.grid_res, grid=grid
            )
            views = render_fixed_views(cloud, image_size=size)
            l_mv = loss_multiview(views, sample.gt_views)
            total = l_occ + l_mv * config.lambda_mv
            _check_finite(float(total.data), "stage 1", epoch, sample.name)
            ad.backward(total)
            opt.step(named, config.stage1_lr)
            ad.zero_grads(named.values())
            occ_sum += float(l_occ.data)
            mv_sum += float(l_mv.data)
            tot_sum += float(total.data)
            seen += 1
            steps += 1
        if seen:
            rows.append((epoch, occ_sum / seen, mv_sum / seen, tot_sum / seen))
        if capped:
            break
    return params, rows


def train_stage2(
    params: ImplicitFieldParams,
    samples: Sequence[TrainingSample],
    config: TrainingConfig,
    epochs: Optional[int] = None,
) -> Tuple[ImplicitFieldParams, List[tuple]]:
    """Self-supervised fine-tuning on masked single-view images.

    Per sample: render the extracted cloud from the canonical input camera;
    L = MSE(alpha, mask) + MSE(rgb * mask, image * mask).  With epochs=0 the
    parameters are returned untouched.  Log rows reuse the stage-1 columns
    with loss_occ fixed at 0.
    """
    if not samples:
        raise ad.ContractViolation("stage 2 needs a non-empty sample list")
    n_epochs = config.stage2_epochs if epochs is None else epochs
    named = dict(params.named())
    opt = Adam()
    size = (config.image_size, config.image_size)
    camera = camera_for_azimuth(0.0, image_size=size)
    rows = []
    steps = 0
    capped = False
    for epoch in range(n_epochs):
        loss_sum = 0.0
        seen = 0
        for sample in samples:
            if config.max_steps_stage2 and steps >= config.max_steps_stage2:
                capped = True
                break
            cloud = extract_point_cloud(params, sample.input_image, grid_res=config.grid_res)
            view = render(cloud, camera)
            total = loss_masked_image(view.image, sample.input_image)
            _check_finite(float(total.data), "stage 2", epoch, sample.name)
            ad.backward(total)
            opt.step(named, config.stage2_lr)
            ad.zero_grads(named.values())
            loss_sum += float(total.data)
            seen += 1
            steps += 1
        if seen:
            rows.append((epoch, 0.0, loss_sum / seen, loss_sum / seen))
        if capped:
            break
    return params, rows


def occupancy_lattice(params, image, grid_res: int, grid=None) -> np.ndarray:
    """Occupancy probabilities over the inclusive [-1,1]^3 lattice, (g,g,g)."""
    pts = lattice(grid_res)
    occ = predict_occupancy(params, image, pts, grid=grid)
    return occ.data.reshape(grid_res, grid_res, grid_res)


def infer_cloud(params, image, grid_res: int, grid=None, threshold: float = 0.5) -> PointCloud:
    """Inference-time extraction: plain-array cloud, no gradient graph."""
    if grid is None:
        grid = encode_image(params, image)
    values = occupancy_lattice(params, image, grid_res, grid=grid).reshape(-1)
    sel = np.flatnonzero(values > threshold)
    positions = lattice(grid_res)[sel]
    if sel.size:
        colors = np.clip(predict_color(params, image, positions, grid=grid).data, 0.0, 1.0)
    else:
        colors = np.zeros((0, 3))
    return PointCloud(positions, colors, values[sel])


def reconstruct(
    params: ImplicitFieldParams, image, config: TrainingConfig
) -> Tuple[Mesh, PointCloud, list]:
    """Single-view reconstruction: textured mesh, point cloud, fixed views."""
    g = config.eval_grid_res
    grid = encode_image(params, image)
    values = occupancy_lattice(params, image, g, grid=grid)
    scalar = ScalarGrid(values=np.clip(values, 0.0, 1.0))

    def color_fn(pts):
        return predict_color(params, image, pts, grid=grid).data

    mesh = marching_cubes(scalar, color_fn=color_fn)
    flat = values.reshape(-1)
    sel = np.flatnonzero(flat > scalar.iso)
    positions = lattice(g)[sel]
    colors = predict_color(params, image, positions, grid=grid).data if sel.size else np.zeros((0, 3))
    cloud = PointCloud(positions, np.clip(colors, 0.0, 1.0), flat[sel])
    size = (config.image_size, config.image_size)
    views = render_fixed_views(cloud, image_size=size)
    return mesh, cloud, views


def write_metrics_csv(rows: Sequence[tuple], path) -> None:
    lines = [CSV_HEADER + "\n"]
    for epoch, occ, mv, total in rows:
        lines.append("%d,%.10g,%.10g,%.10g\n" % (epoch, occ, mv, total))
    with open(path, "w", newline="\n") as fh:
        fh.write("".join(lines))
