"""Time the numba kernels against their pure-numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Each row reports the best-of-``repeat`` wall time per call and the speedup.
The jitted functions are called once before timing so compilation is not
counted. Shapes match what one training step or one Monte-Carlo
realization of the default experiment feeds each kernel.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from iccl import kernels
from iccl.scene import default_trajectory, generate_random_scene, ground_to_3d, sample_ground_points


def best_of(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    scene = generate_random_scene(seed=1)
    lo, hi, att = scene.box_arrays()
    nodes = ground_to_3d(sample_ground_points(scene, 100, rng))
    wp = default_trajectory().waypoints
    p0 = rng.uniform(0, 100, (20000, 3))
    p1 = rng.uniform(0, 100, (20000, 3))
    x = rng.standard_normal((512, 128, 64)).astype(np.float32)
    cols = rng.standard_normal((512, 126, 3 * 64)).astype(np.float32)
    conv = rng.standard_normal((512, 126, 64)).astype(np.float32)
    pooled, arg = kernels.maxpool_forward_np(conv, 2)
    store = rng.standard_normal((200, 128))
    queries = rng.standard_normal((100, 128))
    return [
        ("segment_box_lengths 20000x8", "segment_box_lengths", (p0, p1, lo, hi)),
        ("shadowing_loss_db 100x128", "shadowing_loss_db", (nodes, wp, lo, hi, att)),
        ("im2col 512x128x64 k3", "im2col", (x, 3)),
        ("col2im 512x126x192", "col2im", (cols, 3, 128)),
        ("maxpool_forward 512x126x64", "maxpool_forward", (conv, 2)),
        ("maxpool_backward 512x63x64", "maxpool_backward", (pooled, arg, 126, 2)),
        ("nearest_rows 100 vs 200", "nearest_rows", (store, queries)),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<30} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for label, name, call_args in cases(rng):
        t_nb = best_of(getattr(kernels, name + "_nb"), call_args, args.repeat)
        t_np = best_of(getattr(kernels, name + "_np"), call_args, args.repeat)
        print(f"{label:<30} {1e3 * t_nb:>10.3f} {1e3 * t_np:>10.3f} {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
