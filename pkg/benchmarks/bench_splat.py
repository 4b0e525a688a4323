"""Head-to-head timing of the two splat compositing kernels.

Runs forward and backward passes over a range of cloud sizes through the
compiled lane (_splat_cy) and the pure-numpy lane (_splat_np), checks the
lanes agree to float tolerance, and prints per-size timings with the
speedup.  Usage:

    python benchmarks/bench_splat.py [--sizes 500 2000 8000] [--repeats 5]
"""

import argparse
import time

import numpy as np

from implicit_forge import _splat_np

try:
    from implicit_forge import _splat_cy
except ImportError:
    _splat_cy = None

H = W = 64
SIGMA = 1.8
CUTOFF = 5.4


def make_inputs(m, seed=0):
    rng = np.random.default_rng(seed)
    px = rng.uniform(-2.0, W + 2.0, m)
    py = rng.uniform(-2.0, H + 2.0, m)
    colors = rng.uniform(0.0, 1.0, (m, 3))
    opac = rng.uniform(0.05, 1.0, m)
    bg = np.zeros(3)
    g_img = rng.standard_normal((H, W, 4))
    return px, py, colors, opac, bg, g_img


def time_call(fn, args, repeats):
    best = float("inf")
    fn(*args)  # warm up
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_size(m, repeats):
    px, py, colors, opac, bg, g_img = make_inputs(m)
    fwd_args = (px, py, colors, opac, H, W, SIGMA, CUTOFF, bg)
    bwd_args = fwd_args + (g_img,)

    rows = {}
    for name, mod in (("numpy", _splat_np), ("compiled", _splat_cy)):
        if mod is None:
            continue
        rows[name] = {
            "fwd": time_call(mod.forward, fwd_args, repeats),
            "bwd": time_call(mod.backward, bwd_args, repeats),
            "img": mod.forward(*fwd_args),
            "grads": mod.backward(*bwd_args),
        }

    if "compiled" in rows:
        diff = np.abs(rows["compiled"]["img"] - rows["numpy"]["img"]).max()
        for a, b in zip(rows["compiled"]["grads"], rows["numpy"]["grads"]):
            diff = max(diff, np.abs(np.asarray(a) - np.asarray(b)).max())
        assert diff < 1e-9, "kernel lanes disagree at m=%d: max|diff|=%g" % (m, diff)
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[500, 2000, 8000])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    if _splat_cy is None:
        print("compiled kernel not built; timing the numpy lane only")
    print("%8s  %12s  %12s  %12s  %12s  %9s" % (
        "points", "numpy fwd", "numpy bwd", "comp fwd", "comp bwd", "speedup"))
    for m in args.sizes:
        rows = bench_size(m, args.repeats)
        np_f, np_b = rows["numpy"]["fwd"], rows["numpy"]["bwd"]
        if "compiled" in rows:
            cy_f, cy_b = rows["compiled"]["fwd"], rows["compiled"]["bwd"]
            speed = (np_f + np_b) / (cy_f + cy_b)
            print("%8d  %10.2fms  %10.2fms  %10.2fms  %10.2fms  %8.1fx" % (
                m, 1e3 * np_f, 1e3 * np_b, 1e3 * cy_f, 1e3 * cy_b, speed))
        else:
            print("%8d  %10.2fms  %10.2fms  %12s  %12s  %9s" % (
                m, 1e3 * np_f, 1e3 * np_b, "-", "-", "-"))


if __name__ == "__main__":
    main()
