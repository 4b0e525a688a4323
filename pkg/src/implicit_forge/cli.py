"""Command-line entry point.

Subcommands: gen-data, train-stage1, train-stage2, reconstruct,
render-views, eval.  Every run echoes its effective configuration to
run_config.json in the output directory, and identical invocations produce
byte-identical artifacts.

Exit codes: 0 success, 2 usage/input error, 1 runtime failure.
"""

import argparse
import os
import sys
from pathlib import Path

from . import images
from .autodiff import ContractViolation
from .checkpoint import CheckpointError, load_params, save_params
from .config import TrainingConfig
from .dataset import generate_dataset, load_dataset, load_real_sample
from .metrics import evaluate, format_report_table, write_report_csv
from .obj_io import export_obj
from .shapes import catalog
from .splat import render_fixed_views
from .training import (
    TrainingError,
    infer_cloud,
    reconstruct,
    train_stage1,
    train_stage2,
    write_metrics_csv,
)

THREADS_ENV = "IMPLICIT_FORGE_THREADS"


def thread_cap() -> int:
    """Upper bound on module-level parallelism (current kernels are serial)."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        cap = int(raw)
        if cap < 1:
            raise ValueError
    except ValueError:
        print("warning: ignoring invalid %s=%r" % (THREADS_ENV, raw), file=sys.stderr)
        return 1
    return cap


def _load_config(args) -> TrainingConfig:
    cfg = TrainingConfig.from_json(args.config) if args.config else TrainingConfig()
    pairs = []
    for item in args.set or []:
        if "=" not in item:
            raise ContractViolation("--set expects key=value, got %r" % item)
        key, _, value = item.partition("=")
        pairs.append((key, value))
    if pairs:
        cfg = cfg.apply_overrides(pairs)
    if args.seed is not None:
        cfg = cfg.apply_overrides([("seed", str(args.seed))])
    return cfg


def _echo_config(cfg: TrainingConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.to_json(out_dir / "run_config.json")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_input_image(args):
    if args.mask:
        return load_real_sample(args.image, args.mask).input_image
    return images.load_rgba(args.image)


def _cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    shapes = catalog()[: cfg.n_shapes]
    generate_dataset(
        out,
        shapes=shapes,
        seed=cfg.seed,
        image_size=(cfg.image_size, cfg.image_size),
        n_points=cfg.n_points,
        n_uniform=cfg.n_uniform,
        n_surface=cfg.n_surface,
        noise_sd=cfg.noise_sd,
    )
    _echo_config(cfg, out)
    print("wrote %d samples to %s" % (len(shapes), out))
    return 0


def _cmd_train_stage1(args) -> int:
    cfg = _load_config(args)
    samples = load_dataset(args.data)
    print("stage 1: %d samples, lr=%g" % (len(samples), cfg.stage1_lr))
    params, rows = train_stage1(samples, cfg)
    out = _out_dir(args)
    save_params(params, out / "checkpoint.bin")
    write_metrics_csv(rows, out / "metrics.csv")
    _echo_config(cfg, out)
    if rows:
        print("final epoch %d: total loss %.6g" % (rows[-1][0], rows[-1][3]))
    return 0


def _scan_real_pairs(data_dir: Path):
    masks = sorted(data_dir.glob("*_mask.png"))
    pairs = []
    for mask in masks:
        image = mask.with_name(mask.name[: -len("_mask.png")] + ".png")
        if image.exists():
            pairs.append((image, mask))
    return pairs


def _cmd_train_stage2(args) -> int:
    cfg = _load_config(args)
    params = load_params(args.init)
    data_dir = Path(args.data)
    if not data_dir.is_dir():
        raise IOError("real-sample directory %r not found" % str(data_dir))
    pairs = _scan_real_pairs(data_dir)
    if not pairs:
        raise IOError("no *_mask.png / *.png pairs under %r" % str(data_dir))
    samples = [load_real_sample(img, mask) for img, mask in pairs]
    print("stage 2: %d real samples, lr=%g" % (len(samples), cfg.stage2_lr))
    params, rows = train_stage2(params, samples, cfg)
    out = _out_dir(args)
    save_params(params, out / "checkpoint.bin")
    write_metrics_csv(rows, out / "metrics.csv")
    _echo_config(cfg, out)
    if rows:
        print("final epoch %d: total loss %.6g" % (rows[-1][0], rows[-1][3]))
    return 0


def _cmd_reconstruct(args) -> int:
    cfg = _load_config(args)
    params = load_params(args.init)
    image = _load_input_image(args)
    if not (image[:, :, 3] > 0.5).any():
        print("warning: input image has no foreground pixels", file=sys.stderr)
    mesh, cloud, views = reconstruct(params, image, cfg)
    out = _out_dir(args)
    export_obj(mesh, out / "mesh.obj")
    if len(mesh.vertices) == 0:
        print("warning: reconstruction produced an empty mesh", file=sys.stderr)
    for deg, rv in zip((0, 90, 180), views):
        images.save_rgba(out / ("view%d.png" % deg), rv.image.data)
    _echo_config(cfg, out)
    print(
        "reconstructed %d cloud points, %d mesh vertices"
        % (len(cloud), len(mesh.vertices))
    )
    return 0


def _cmd_render_views(args) -> int:
    cfg = _load_config(args)
    params = load_params(args.init)
    image = _load_input_image(args)
    cloud = infer_cloud(params, image, cfg.eval_grid_res)
    views = render_fixed_views(cloud, image_size=(cfg.image_size, cfg.image_size))
    out = _out_dir(args)
    for deg, rv in zip((0, 90, 180), views):
        images.save_rgba(out / ("view%d.png" % deg), rv.image.data)
    _echo_config(cfg, out)
    print("rendered 3 views from %d cloud points" % len(cloud))
    return 0


def _cmd_eval(args) -> int:
    cfg = _load_config(args)
    params = load_params(args.init)
    samples = load_dataset(args.data)
    report = evaluate(params, samples, cfg)
    out = _out_dir(args)
    write_report_csv(report, out / "report.csv")
    _echo_config(cfg, out)
    print(format_report_table(report))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="implicit-forge",
        description="Single-view 3D reconstruction: data generation, training, inference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False, init=False, image=False):
        p.add_argument("--config", help="JSON config file (TrainingConfig fields)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override config seed")
        p.add_argument("--set", action="append", metavar="K=V", help="config override, repeatable")
        if data:
            p.add_argument("--data", required=True, help="data directory")
        if init:
            p.add_argument("--init", required=True, help="checkpoint to start from")
        if image:
            p.add_argument("--image", required=True, help="input image (PNG)")
            p.add_argument("--mask", help="optional silhouette mask (PNG)")

    common(sub.add_parser("gen-data", help="write the synthetic dataset"))
    common(sub.add_parser("train-stage1", help="supervised training on synthetic data"), data=True)
    common(sub.add_parser("train-stage2", help="fine-tune on masked real images"), data=True, init=True)
    common(sub.add_parser("reconstruct", help="single image -> mesh + views"), init=True, image=True)
    common(sub.add_parser("render-views", help="single image -> fixed views only"), init=True, image=True)
    common(sub.add_parser("eval", help="score a checkpoint on a dataset"), data=True, init=True)
    return parser


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train-stage1": _cmd_train_stage1,
    "train-stage2": _cmd_train_stage2,
    "reconstruct": _cmd_reconstruct,
    "render-views": _cmd_render_views,
    "eval": _cmd_eval,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    thread_cap()  # validates the env var early, warns on nonsense
    try:
        return _COMMANDS[args.command](args)
    except (ContractViolation, CheckpointError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except TrainingError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - last-resort runtime failure
        print("internal error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
