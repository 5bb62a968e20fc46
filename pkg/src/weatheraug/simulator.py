"""Raindrop population sampling, motion over the exposure, and projection.

Drops are stored as struct-of-arrays (a 20 m frustum at 200 mm/hr holds a few
million of them); :class:`Drop` and :class:`StreakGeometry` are per-item views
for callers who want objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import kernels
from .imgcore import CameraRig

MP_N0 = 8000.0  # m^-3 mm^-1
MP_LAMBDA_COEF = 4.1  # mm^-1
MP_LAMBDA_EXP = -0.21
D_MIN_MM = 1.0
D_MAX_MM = 10.0

ATLAS_A, ATLAS_B, ATLAS_C = 9.65, 10.3, 0.6


def mp_slope(rate: float) -> float:
    """Marshall-Palmer slope Lambda(R) in mm^-1."""
    if rate <= 0:
        raise ValueError("rain rate must be positive")
    return MP_LAMBDA_COEF * rate ** MP_LAMBDA_EXP


def marshall_palmer_density(rate: float, diameter):
    """Drop number density N(D) in drops per m^3 per mm of diameter."""
    return MP_N0 * np.exp(-mp_slope(rate) * np.asarray(diameter, dtype=np.float64))


def drops_per_m3(rate: float, d_min: float = D_MIN_MM, d_max: float = D_MAX_MM) -> float:
    """Integral of N(D) over [d_min, d_max]."""
    if rate == 0:
        return 0.0
    lam = mp_slope(rate)
    return MP_N0 / lam * (np.exp(-lam * d_min) - np.exp(-lam * d_max))


def terminal_velocity(diameter):
    """Fall speed in m/s for a drop diameter in mm (Atlas fit)."""
    d = np.asarray(diameter, dtype=np.float64)
    return np.maximum(0.0, ATLAS_A - ATLAS_B * np.exp(-ATLAS_C * d))


def truncated_exponential_cdf(d, lam: float, d_min: float = D_MIN_MM, d_max: float = D_MAX_MM):
    d = np.clip(np.asarray(d, dtype=np.float64), d_min, d_max)
    return (1 - np.exp(-lam * (d - d_min))) / (1 - np.exp(-lam * (d_max - d_min)))


@dataclass(frozen=True)
class SimVolume:
    """Camera-frame frustum between ``near`` and ``far`` meters.

    Lateral extent is the image's field of view widened on every side by
    ``margin`` times the field-of-view span.
    """

    near: float = 0.5
    far: float = 20.0
    margin: float = 0.1

    def __post_init__(self):
        if not (self.far > self.near > 0) or self.margin < 0:
            raise ValueError("volume requires far > near > 0 and margin >= 0")

    def tangent_extents(self, rig: CameraRig, image_dims: tuple[int, int]):
        height, width = image_dims
        cx, cy = rig.principal_point
        f = rig.focal_px
        x_lo, x_hi = -cx / f, (width - cx) / f
        y_lo, y_hi = -cy / f, (height - cy) / f
        mx = self.margin * (x_hi - x_lo)
        my = self.margin * (y_hi - y_lo)
        return x_lo - mx, x_hi + mx, y_lo - my, y_hi + my

    def cubic_meters(self, rig: CameraRig, image_dims: tuple[int, int]) -> float:
        x_lo, x_hi, y_lo, y_hi = self.tangent_extents(rig, image_dims)
        return (self.far ** 3 - self.near ** 3) / 3.0 * (x_hi - x_lo) * (y_hi - y_lo)


@dataclass(frozen=True)
class Drop:
    position: np.ndarray  # camera frame, m
    diameter: float  # mm
    velocity: np.ndarray  # camera frame, m/s


@dataclass(frozen=True)
class RainState:
    rate: float
    seed: int
    volume: SimVolume
    positions: np.ndarray = field(repr=False)  # (N, 3)
    diameters: np.ndarray = field(repr=False)  # (N,)
    velocities: np.ndarray = field(repr=False)  # (N, 3)

    def __len__(self) -> int:
        return len(self.diameters)

    @property
    def drops(self) -> list[Drop]:
        return [Drop(p, float(d), v) for p, d, v in zip(self.positions, self.diameters, self.velocities)]


def sample_drops(rate: float, rig: CameraRig, image_dims: tuple[int, int],
                 volume: SimVolume = SimVolume(), seed: int = 0) -> RainState:
    """Draw a Poisson population of drops >= 1 mm filling the camera frustum.

    Count ~ Poisson(V * integral N(D) dD over [1, 10] mm), diameters from the
    truncated exponential, positions uniform in volume. Velocities are the
    terminal fall along world +y minus the camera's forward ego motion,
    expressed in the camera frame.
    """
    if rate < 0:
        raise ValueError("rain rate must be non-negative")
    cubic = volume.cubic_meters(rig, image_dims)
    if cubic <= 0:
        raise ValueError("simulation volume is empty")
    rng = np.random.Generator(np.random.PCG64(seed))
    if rate == 0:
        empty = np.zeros((0, 3))
        return RainState(rate, seed, volume, empty, np.zeros(0), empty.copy())

    lam = mp_slope(rate)
    n = int(rng.poisson(cubic * drops_per_m3(rate)))
    u = rng.random(n)
    mass = 1 - np.exp(-lam * (D_MAX_MM - D_MIN_MM))
    diameters = D_MIN_MM - np.log1p(-u * mass) / lam

    x_lo, x_hi, y_lo, y_hi = volume.tangent_extents(rig, image_dims)
    near3, far3 = volume.near ** 3, volume.far ** 3
    z = np.cbrt(near3 + rng.random(n) * (far3 - near3))
    positions = np.empty((n, 3))
    positions[:, 0] = z * (x_lo + rng.random(n) * (x_hi - x_lo))
    positions[:, 1] = z * (y_lo + rng.random(n) * (y_hi - y_lo))
    positions[:, 2] = z

    world_vel = np.zeros((n, 3))
    world_vel[:, 1] = terminal_velocity(diameters)
    world_vel[:, 2] = -rig.ego_speed
    velocities = world_vel @ rig.rotation  # R^T v for row vectors
    return RainState(rate, seed, volume, positions, diameters, velocities)


@dataclass(frozen=True)
class StreakGeometry:
    start_px: np.ndarray
    end_px: np.ndarray
    image_diameter: float
    depth: float
    length_px: float
    drop_diameter: float = 0.0  # mm
    drop_position: np.ndarray | None = None


@dataclass(frozen=True)
class StreakBatch:
    """Projected streaks, one row per surviving drop."""

    start: np.ndarray  # (N, 2) px
    end: np.ndarray  # (N, 2) px
    image_diameter: np.ndarray
    depth: np.ndarray
    drop_diameter: np.ndarray
    drop_position: np.ndarray  # (N, 3)

    @property
    def length_px(self) -> np.ndarray:
        return np.hypot(*(self.end - self.start).T)

    def __len__(self) -> int:
        return len(self.depth)

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return StreakGeometry(
                start_px=self.start[idx], end_px=self.end[idx],
                image_diameter=float(self.image_diameter[idx]), depth=float(self.depth[idx]),
                length_px=float(np.hypot(*(self.end[idx] - self.start[idx]))),
                drop_diameter=float(self.drop_diameter[idx]), drop_position=self.drop_position[idx],
            )
        return StreakBatch(self.start[idx], self.end[idx], self.image_diameter[idx],
                           self.depth[idx], self.drop_diameter[idx], self.drop_position[idx])

    def __iter__(self) -> Iterator[StreakGeometry]:
        for i in range(len(self)):
            yield self[i]


def project_points(points: np.ndarray, rig: CameraRig) -> np.ndarray:
    cx, cy = rig.principal_point
    f = rig.focal_px
    z = points[:, 2]
    return np.stack([f * points[:, 0] / z + cx, f * points[:, 1] / z + cy], axis=1)


def project_streaks(state: RainState, rig: CameraRig, image_dims: tuple[int, int]) -> StreakBatch:
    """Project start/end of every drop's exposure path; cull what misses the image."""
    height, width = image_dims
    cx, cy = rig.principal_point
    start, end, diam_px, keep = kernels.project_drops(
        np.ascontiguousarray(state.positions), np.ascontiguousarray(state.velocities),
        np.ascontiguousarray(state.diameters), rig.focal_px, cx, cy, rig.exposure_time,
        float(width), float(height))
    return StreakBatch(start[keep], end[keep], diam_px[keep], state.positions[keep, 2],
                       state.diameters[keep], state.positions[keep])


def classify_drops(streaks: StreakBatch, threshold_px: float = 1.0):
    """Split into (foglike, visible) by projected drop diameter."""
    visible = streaks.image_diameter >= threshold_px
    return streaks[~visible], streaks[visible]


def visible_drop_fraction(rate: float, rig: CameraRig, image_dims: tuple[int, int],
                          volume: SimVolume, seed: int = 0, d_min_total: float = 0.5) -> float:
    """Fraction of all drops in ``volume`` imaged on at least one pixel.

    Drops >= 1 mm are simulated and projected; the population between
    ``d_min_total`` and 1 mm is never visible at realistic focal lengths and
    enters only through its analytic expected count.
    """
    state = sample_drops(rate, rig, image_dims, volume, seed)
    _, visible = classify_drops(project_streaks(state, rig, image_dims))
    cubic = volume.cubic_meters(rig, image_dims)
    total = len(state) + cubic * drops_per_m3(rate, d_min_total, D_MIN_MM)
    return len(visible) / total
