"""Procedural street-like scenes with consistent depth, for tests and benchmarks."""

from __future__ import annotations

import numpy as np

from .imgcore import CameraRig, DepthMap, LinearImage, kitti_rig

SKY_DEPTH_M = 80.0  # far cap of typical driving depth maps


def street_scene(seed: int = 0, width: int = 1242, height: int = 375,
                 rig: CameraRig | None = None, max_depth: float = SKY_DEPTH_M
                 ) -> tuple[LinearImage, DepthMap, CameraRig]:
    """Sky gradient over a textured ground plane with a few fronto-parallel boxes.

    Sky and distant ground share ``max_depth``.
    """
    rig = rig or kitti_rig(width, height)
    rng = np.random.Generator(np.random.PCG64(seed))
    cx, cy = rig.principal_point
    f = rig.focal_px
    rows = np.arange(height) + 0.5
    cols = np.arange(width) + 0.5

    depth = np.full((height, width), float(max_depth))
    below = rows > cy + 1.0
    ground = rig.camera_height * f / (rows[below] - cy)
    depth[below] = np.minimum(ground, max_depth)[:, None]

    sky_top = np.array([0.35, 0.45, 0.75]) * rng.uniform(0.7, 1.3)
    sky_bottom = np.array([0.75, 0.8, 0.85]) * rng.uniform(0.7, 1.1)
    t = np.clip(rows / max(cy, 1.0), 0, 1)[:, None, None]
    img = np.broadcast_to(sky_top * (1 - t) + sky_bottom * t, (height, width, 3)).copy()
    ground_col = np.array([0.12, 0.12, 0.11]) * rng.uniform(0.6, 1.6)
    noise = 1 + 0.25 * rng.standard_normal((height, width, 1))
    img[below] = np.clip(ground_col * noise[below], 0, None)

    for _ in range(rng.integers(3, 7)):
        d = rng.uniform(6.0, min(60.0, 0.9 * max_depth))
        w_m, h_m = rng.uniform(1.5, 5.0), rng.uniform(1.2, 4.0)
        x_m = rng.uniform(-12.0, 12.0)
        u0, u1 = cx + f * x_m / d, cx + f * (x_m + w_m) / d
        v1 = cy + f * rig.camera_height / d
        v0 = v1 - f * h_m / d
        cmask = (cols >= u0) & (cols < u1)
        rmask = (rows >= v0) & (rows < v1)
        box = rmask[:, None] & cmask[None, :] & (depth > d)
        depth[box] = d
        img[box] = rng.uniform(0.02, 0.6, size=3)
    return LinearImage(img), DepthMap(depth), rig
