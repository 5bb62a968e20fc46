"""Compare the compiled and pure-numpy kernel backends.

Times each hot kernel on representative inputs, then a full rain frame with
each backend swapped in.

    python3 benchmarks/bench_kernels.py --repeat 5 --rate 100
"""

import argparse
import contextlib
import time

import numpy as np

from weatheraug import kernels
from weatheraug.compositor import RainParams, augment_frame
from weatheraug.imgcore import kitti_rig
from weatheraug.simulator import SimVolume, sample_drops
from weatheraug.streaks import procedural_streak_db
from weatheraug.synthetic import street_scene

KERNEL_NAMES = ("warp_bilinear", "blend_into", "project_drops")


@contextlib.contextmanager
def use_backend(name):
    module = kernels.backend_module(name)
    saved = {k: getattr(kernels, k) for k in KERNEL_NAMES}
    for k in KERNEL_NAMES:
        setattr(kernels, k, getattr(module, k))
    try:
        yield module
    finally:
        for k, fn in saved.items():
            setattr(kernels, k, fn)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(rng):
    tex = rng.random((64, 8))
    theta = 0.3
    H = np.array([[np.cos(theta), -np.sin(theta), 40.0], [np.sin(theta), np.cos(theta), 12.0], [0, 0, 1.0]])
    hinv = np.linalg.inv(H)
    canvas = rng.random((375, 1242, 3))
    sprite = rng.random((80, 24))
    gain = np.array([0.4, 0.5, 0.6])
    rig = kitti_rig()
    state = sample_drops(100.0, rig, (375, 1242), SimVolume(), seed=0)
    proj_args = (state.positions, state.velocities, state.diameters, rig.focal_px,
                 *rig.principal_point, rig.exposure_time, 1242.0, 375.0)

    def warp(mod):
        for _ in range(200):
            mod.warp_bilinear(tex, tex, hinv, 0, 0, 80, 70)

    def blend(mod):
        for _ in range(200):
            mod.blend_into(canvas, sprite, sprite, gain, 500, 100, 1e-4, 2e-3, 6.3e-4)

    def project(mod):
        mod.project_drops(*proj_args)

    return {"warp x200 (80x70)": warp, "blend x200 (80x24)": blend,
            f"project {len(state) / 1e6:.1f}M drops": project}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--rate", type=float, default=100.0, help="rain rate for the full-frame case, mm/hr")
    args = parser.parse_args(argv)

    try:
        kernels.backend_module("cython")
        backends = ("cython", "python")
    except ImportError:
        print("compiled kernels not built; timing the numpy backend only")
        backends = ("python",)

    rng = np.random.default_rng(0)
    cases = kernel_cases(rng)
    img, depth, rig = street_scene(seed=0)
    db = procedural_streak_db()

    def frame():
        augment_frame(img, depth, rig, RainParams(args.rate), db, seed=0)

    print(f"{'case':<28}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    rows = list(cases.items()) + [(f"frame 1242x375 R={args.rate:g}", None)]
    for label, fn in rows:
        times = []
        for b in backends:
            with use_backend(b) as mod:
                times.append(best_of(frame if fn is None else (lambda: fn(mod)), args.repeat))
        line = f"{label:<28}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times)
        if len(times) == 2:
            line += f"{times[1] / times[0]:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
