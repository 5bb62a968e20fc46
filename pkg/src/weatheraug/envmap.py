"""Latitude-longitude environment maps estimated from a single image.

Texel (i, j) of an ``H x 2H`` map covers latitude band i (north pole at row 0)
and longitude column j, with longitude 0 (the level camera's forward axis) at
column ``H``. Directions are expressed in the rig's world frame: x right,
y down, z forward.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .imgcore import LUMA_WEIGHTS, CameraRig, LinearImage

DROP_FOV_DEG = 165.0
SCENE_DISTANCE_M = 10.0
DEFAULT_HEIGHT = 128
CAP_FRACTION = 0.10


def _latitudes(height: int) -> tuple[np.ndarray, np.ndarray]:
    edges = np.pi / 2 - np.arange(height + 1) * np.pi / height
    centers = 0.5 * (edges[:-1] + edges[1:])
    return centers, edges


def _longitudes(width: int) -> np.ndarray:
    return -np.pi + (np.arange(width) + 0.5) * 2 * np.pi / width


def texel_solid_angles(height: int) -> np.ndarray:
    """Exact steradians of each texel; rows sum to 4*pi by telescoping."""
    _, edges = _latitudes(height)
    band = np.sin(edges[:-1]) - np.sin(edges[1:])
    return np.repeat((band * (2 * np.pi / (2 * height)))[:, None], 2 * height, axis=1)


def texel_directions(height: int) -> np.ndarray:
    lat, _ = _latitudes(height)
    lon = _longitudes(2 * height)
    lat, lon = np.meshgrid(lat, lon, indexing="ij")
    return np.stack([np.cos(lat) * np.sin(lon), -np.sin(lat), np.cos(lat) * np.cos(lon)], axis=-1)


@dataclass(frozen=True)
class EnvironmentMap:
    data: np.ndarray  # (H, 2H, 3) linear radiance
    camera_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    solid_angles: np.ndarray = field(init=False, repr=False)
    directions: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 3 or data.shape[1] != 2 * data.shape[0]:
            raise ValueError(f"environment map must be (H, 2H, 3), got {data.shape}")
        if np.any(data < 0) or not np.all(np.isfinite(data)):
            raise ValueError("environment radiance must be finite and non-negative")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "camera_rotation", np.asarray(self.camera_rotation, dtype=np.float64))
        object.__setattr__(self, "solid_angles", texel_solid_angles(data.shape[0]))
        object.__setattr__(self, "directions", texel_directions(data.shape[0]))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def mean_radiance(self) -> np.ndarray:
        return solid_angle_mean(self, np.ones((self.height, self.width), dtype=bool))

    def luminance(self) -> np.ndarray:
        return self.data @ LUMA_WEIGHTS

    def to_image(self) -> LinearImage:
        return LinearImage(self.data)


@dataclass(frozen=True)
class DropFovRegion:
    mask: np.ndarray
    mean_radiance: np.ndarray


def bilinear_sample(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Sample (H, W, C) ``img`` at continuous pixel coordinates (centers at +0.5)."""
    coords = np.stack([np.asarray(v) - 0.5, np.asarray(u) - 0.5])
    out = np.empty(np.shape(u) + (img.shape[2],))
    for c in range(img.shape[2]):
        out[..., c] = ndimage.map_coordinates(img[..., c], coords, order=1, mode="nearest")
    return out


def source_coordinates(rig: CameraRig, img_shape: tuple[int, int], out_height: int):
    """Image coordinates (u, v) read by every environment texel.

    Texel directions are expressed as camera-relative longitude/latitude. The
    longitude is folded into the image's horizontal field of view by mirror
    tiling; inside the folded column the row follows the pinhole projection,
    and beyond the image top/bottom the outer 10% of rows are stretched
    (mirrored) up to the poles. Inside the true field of view this reduces to
    the exact pinhole projection.
    """
    h, w = img_shape
    cx, cy = rig.principal_point
    f = rig.focal_px
    d_cam = texel_directions(out_height) @ rig.rotation  # world -> camera: R^T d
    lon = np.arctan2(d_cam[..., 0], d_cam[..., 2])
    lat = np.arcsin(np.clip(-d_cam[..., 1], -1.0, 1.0))

    a_left = np.arctan((0.0 - cx) / f)
    a_right = np.arctan((w - cx) / f)
    span = a_right - a_left
    s = (lon - a_left) / span
    k = np.floor(s)
    frac = s - k
    frac = np.where(np.mod(k, 2) == 1, 1.0 - frac, frac)
    lon_f = a_left + frac * span
    u = cx + f * np.tan(lon_f)

    cos_f = np.cos(lon_f)
    with np.errstate(over="ignore", invalid="ignore"):
        v = cy - f * np.tan(lat) / cos_f
    lat_top = np.arctan(cy * cos_f / f)
    lat_bot = -np.arctan((h - cy) * cos_f / f)
    cap = CAP_FRACTION * h
    top = lat > lat_top
    bot = lat < lat_bot
    t_top = (lat - lat_top) / (np.pi / 2 - lat_top)
    t_bot = (lat_bot - lat) / (lat_bot + np.pi / 2)
    v = np.where(top, t_top * cap, v)
    v = np.where(bot, h - t_bot * cap, v)
    return np.clip(u, 0.0, w), np.clip(v, 0.0, h)


def estimate_environment(img: LinearImage, rig: CameraRig,
                         out_height: int = DEFAULT_HEIGHT) -> EnvironmentMap:
    """Full-sphere radiance map built from the image alone."""
    if out_height < 32:
        raise ValueError("out_height must be at least 32")
    u, v = source_coordinates(rig, img.shape, out_height)
    data = np.maximum(bilinear_sample(img.data, u, v), 0.0)
    return EnvironmentMap(data, camera_rotation=rig.rotation)


def solid_angle_mean(env: EnvironmentMap, mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("mask selects no texels")
    w = env.solid_angles[mask]
    return (env.data[mask] * w[:, None]).sum(axis=0) / w.sum()


def _fov_cos(fov: float) -> float:
    if fov >= 360.0:
        return -np.inf
    return float(np.cos(np.radians(fov) / 2))


def drop_fov_region(env: EnvironmentMap, drop_position, fov: float = DROP_FOV_DEG,
                    scene_distance: float = SCENE_DISTANCE_M,
                    colocated: bool = True) -> DropFovRegion:
    """Texels refracted toward the camera by a drop at ``drop_position`` (camera frame).

    With ``colocated`` the drop sits at the sphere centre and the region is a
    cap about the camera-to-drop axis. Otherwise the cone is cast from the
    drop onto a sphere of radius ``scene_distance`` around the camera.
    """
    p_cam = np.asarray(drop_position, dtype=np.float64)
    norm = np.linalg.norm(p_cam)
    if norm == 0 or p_cam[2] <= 0:
        raise ValueError("drop must lie in front of the camera")
    axis = env.camera_rotation @ (p_cam / norm)
    rays = env.directions
    if not colocated:
        rays = scene_distance * rays - env.camera_rotation @ p_cam
        rays = rays / np.linalg.norm(rays, axis=-1, keepdims=True)
    mask = rays @ axis >= _fov_cos(fov) - 1e-12
    return DropFovRegion(mask=mask, mean_radiance=solid_angle_mean(env, mask))


def drop_fov_means(env: EnvironmentMap, positions: np.ndarray, fov: float = DROP_FOV_DEG,
                   chunk: int = 256) -> np.ndarray:
    """Batched co-located :func:`drop_fov_region` means for (N, 3) camera-frame positions."""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if len(positions) == 0:
        return np.zeros((0, 3))
    axes = positions @ env.camera_rotation.T
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    dirs = env.directions.reshape(-1, 3)
    weights = env.solid_angles.reshape(-1)
    weighted = env.data.reshape(-1, 3) * weights[:, None]
    thr = _fov_cos(fov) - 1e-12
    out = np.empty((len(axes), 3))
    for start in range(0, len(axes), chunk):
        sel = (dirs @ axes[start:start + chunk].T >= thr).astype(np.float64)  # (M, n)
        out[start:start + chunk] = (sel.T @ weighted) / (sel.T @ weights)[:, None]
    return out


def upper_hemisphere(env: EnvironmentMap) -> np.ndarray:
    mask = np.zeros((env.height, env.width), dtype=bool)
    mask[: env.height // 2] = True
    return mask


def estimate_sun_irradiance(env: EnvironmentMap, k_sun: float = 1.0) -> float:
    """Sun irradiance proxy: ``k_sun`` times the mean upper-hemisphere luminance."""
    mask = upper_hemisphere(env)
    w = env.solid_angles[mask]
    lum = env.luminance()[mask]
    return float(k_sun * (lum * w).sum() / w.sum())


def sun_direction(env: EnvironmentMap) -> np.ndarray:
    """World direction of the brightest upper-hemisphere texel (first on ties)."""
    half = env.height // 2
    lum = env.luminance()[:half]
    i, j = np.unravel_index(np.argmax(lum), lum.shape)
    return env.directions[i, j]
