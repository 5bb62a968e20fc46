"""Image, depth and camera types plus their file I/O.

Everything photometric downstream works on :class:`LinearImage`, i.e. linear
radiance where an 8-bit white pixel maps to 1.0. Depth is always stored in
meters.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from PIL import Image
from scipy import ndimage

LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])


class IngestionError(ValueError):
    """Raised when an image, depth map or calibration file cannot be used."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LinearImage:
    """Linear-radiance RGB raster of shape (height, width, 3)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) array, got shape {data.shape}")
        if data.shape[0] == 0 or data.shape[1] == 0:
            raise ValueError("image must be non-empty")
        if not np.all(np.isfinite(data)):
            raise ValueError("image contains NaN or Inf")
        if np.any(data < 0):
            raise ValueError("image contains negative radiance")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]

    def luminance(self) -> np.ndarray:
        return self.data @ LUMA_WEIGHTS

    def mean(self) -> float:
        return float(self.data.mean())


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel metric distance of shape (height, width)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.size == 0:
            raise ValueError(f"expected non-empty (H, W) array, got shape {data.shape}")
        if not np.all(np.isfinite(data)) or np.any(data <= 0):
            raise ValueError("depth must be finite and strictly positive")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def check_aligned(img: LinearImage, depth: DepthMap) -> None:
    if img.shape != depth.shape:
        raise IngestionError(
            f"depth map {depth.width}x{depth.height} does not match image {img.width}x{img.height}"
        )


@dataclass(frozen=True)
class CameraRig:
    """Pinhole camera with the photographic parameters the renderer needs.

    ``rotation`` maps camera-frame vectors (x right, y down, z forward) into a
    gravity-aligned world frame using the same axes as a level camera, so the
    identity is a level camera and gravity points along world +y.
    """

    focal_length: float  # m
    f_number: float
    exposure_time: float  # s
    focus_plane: float  # m
    principal_point: tuple[float, float]  # px (cx, cy)
    pixels_per_meter: float  # sensor scale, 1/m
    camera_height: float = 1.65  # m
    ego_speed: float = 0.0  # m/s
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        if self.focal_length <= 0 or self.f_number <= 0 or self.exposure_time <= 0:
            raise ValueError("focal_length, f_number and exposure_time must be positive")
        if self.focus_plane <= self.focal_length:
            raise ValueError("focus_plane must lie beyond the focal length")
        if self.pixels_per_meter <= 0:
            raise ValueError("pixels_per_meter must be positive")
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-6):
            raise ValueError("rotation must be orthonormal")
        object.__setattr__(self, "rotation", _frozen(rot))
        object.__setattr__(
            self, "principal_point", (float(self.principal_point[0]), float(self.principal_point[1]))
        )

    @property
    def focal_px(self) -> float:
        return self.focal_length * self.pixels_per_meter

    def replace(self, **changes) -> "CameraRig":
        return dataclasses.replace(self, **changes)

    def pixel_rays(self, height: int, width: int) -> np.ndarray:
        """Unit view rays (H, W, 3) through pixel centers, in the world frame."""
        cx, cy = self.principal_point
        f = self.focal_px
        xs = (np.arange(width) + 0.5 - cx) / f
        ys = (np.arange(height) + 0.5 - cy) / f
        rays = np.empty((height, width, 3))
        rays[..., 0] = xs[None, :]
        rays[..., 1] = ys[:, None]
        rays[..., 2] = 1.0
        rays /= np.linalg.norm(rays, axis=-1, keepdims=True)
        return rays @ self.rotation.T


def kitti_rig(width: int = 1242, height: int = 375, **overrides) -> CameraRig:
    """Kitti-like rig: 6 mm lens imaged at ~721 px focal length, 2 ms exposure."""
    params = dict(
        focal_length=0.006,
        f_number=2.0,
        exposure_time=0.002,
        focus_plane=6.0,
        principal_point=(width / 2.0, height / 2.0),
        pixels_per_meter=721.5377 / 0.006 * (width / 1242.0),
        camera_height=1.65,
    )
    params.update(overrides)
    return CameraRig(**params)


# --- colour transfer -------------------------------------------------------

def srgb_to_linear(v):
    v = np.asarray(v, dtype=np.float64)
    return np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(v):
    v = np.asarray(v, dtype=np.float64)
    return np.where(v <= 0.0031308, v * 12.92, 1.055 * np.power(np.maximum(v, 0.0), 1 / 2.4) - 0.055)


_DECODE_LUT = srgb_to_linear(np.arange(256) / 255.0)


def encode_8bit(img: LinearImage) -> np.ndarray:
    srgb = linear_to_srgb(np.clip(img.data, 0.0, 1.0))
    return np.clip(np.floor(srgb * 255.0 + 0.5), 0, 255).astype(np.uint8)


def decode_8bit(arr: np.ndarray) -> LinearImage:
    return LinearImage(_DECODE_LUT[np.asarray(arr, dtype=np.uint8)])


# --- file I/O ---------------------------------------------------------------

def load_image(path) -> LinearImage:
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("I", "I;16", "I;16B", "I;16L", "F", "RGB;16", "RGBA;16"):
                raise IngestionError(f"{path}: unsupported bit depth (mode {im.mode}), expected 8-bit")
            arr = np.asarray(im.convert("RGB"))
    except IngestionError:
        raise
    except (OSError, ValueError) as exc:
        raise IngestionError(f"{path}: cannot read image ({exc})") from exc
    return decode_8bit(arr)


def save_image(img: LinearImage, path) -> None:
    path = Path(path)
    try:
        Image.fromarray(encode_8bit(img), mode="RGB").save(path)
    except (OSError, ValueError) as exc:
        raise OSError(f"{path}: cannot write image ({exc})") from exc


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into a float array, top row first."""
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header not in (b"PF", b"Pf"):
            raise IngestionError(f"{path}: not a PFM file")
        channels = 3 if header == b"PF" else 1
        dims = fh.readline().split()
        while not dims:
            dims = fh.readline().split()
        width, height = int(dims[0]), int(dims[1])
        scale = float(fh.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(), dtype=dtype, count=width * height * channels)
    shape = (height, width, channels) if channels == 3 else (height, width)
    return np.flipud(data.reshape(shape)).astype(np.float64)


def write_pfm(path, data: np.ndarray) -> None:
    data = np.asarray(data, dtype="<f4")
    header = b"PF" if data.ndim == 3 else b"Pf"
    with open(path, "wb") as fh:
        fh.write(header + b"\n")
        fh.write(f"{data.shape[1]} {data.shape[0]}\n".encode())
        fh.write(b"-1.0\n")
        fh.write(np.ascontiguousarray(np.flipud(data)).tobytes())


def fill_depth_holes(raw: np.ndarray) -> np.ndarray:
    """Replace non-finite or non-positive entries by their nearest valid neighbour."""
    raw = np.asarray(raw, dtype=np.float64)
    invalid = ~np.isfinite(raw) | (raw <= 0)
    if invalid.all():
        raise IngestionError("depth map has no valid entries")
    if not invalid.any():
        return raw.copy()
    _, (iy, ix) = ndimage.distance_transform_edt(invalid, return_indices=True)
    return raw[iy, ix]


def load_depth(path, unit_scale: float | None = None) -> DepthMap:
    """Load metric depth from a 16-bit PNG (needs ``unit_scale``) or a PFM in meters."""
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        raw = read_pfm(path)
        if raw.ndim == 3:
            raw = raw[..., 0]
        raw = raw * (1.0 if unit_scale is None else unit_scale)
    else:
        try:
            with Image.open(path) as im:
                im.load()
                mode = im.mode
                raw = np.asarray(im, dtype=np.float64)
        except OSError as exc:
            raise IngestionError(f"{path}: cannot read depth ({exc})") from exc
        if mode not in ("I", "I;16", "I;16B", "I;16L", "F"):
            raise IngestionError(f"{path}: depth PNG must be single-channel 16-bit, got mode {mode}")
        if unit_scale is None:
            raise IngestionError(f"{path}: integer depth needs a unit scale (meters per stored unit)")
        raw = raw * unit_scale
    try:
        return DepthMap(fill_depth_holes(raw))
    except IngestionError as exc:
        raise IngestionError(f"{path}: {exc}") from exc


def save_depth_png(depth: np.ndarray, path, unit_scale: float) -> None:
    stored = np.clip(np.round(np.asarray(depth) / unit_scale), 0, 65535).astype(np.uint16)
    Image.fromarray(stored).save(path)


_CALIB_KEYS = {
    "focal_length_m": "focal_length",
    "f_number": "f_number",
    "exposure_s": "exposure_time",
    "focus_plane_m": "focus_plane",
    "principal_point_px": "principal_point",
    "pixels_per_meter": "pixels_per_meter",
    "camera_height_m": "camera_height",
    "ego_speed_mps": "ego_speed",
    "rotation": "rotation",
}


def load_calibration(path) -> CameraRig:
    """Parse a ``key: value`` calibration file (YAML subset) into a rig."""
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise IngestionError(f"{path}: cannot parse calibration ({exc})") from exc
    if not isinstance(doc, dict):
        raise IngestionError(f"{path}: calibration must be a mapping")
    unknown = set(doc) - set(_CALIB_KEYS)
    if unknown:
        raise IngestionError(f"{path}: unknown calibration keys {sorted(unknown)}")
    kwargs = {_CALIB_KEYS[k]: v for k, v in doc.items()}
    for key in ("principal_point", "rotation"):
        if isinstance(kwargs.get(key), str):
            kwargs[key] = [float(t) for t in re.split(r"[,\s]+", kwargs[key].strip()) if t]
    if "rotation" in kwargs:
        kwargs["rotation"] = np.asarray(kwargs["rotation"], dtype=np.float64).reshape(3, 3)
    try:
        return CameraRig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise IngestionError(f"{path}: invalid calibration ({exc})") from exc


def save_calibration(rig: CameraRig, path) -> None:
    inverse = {v: k for k, v in _CALIB_KEYS.items()}
    doc = {}
    for f in dataclasses.fields(rig):
        value = getattr(rig, f.name)
        if f.name == "rotation":
            value = [float(x) for x in np.asarray(value).ravel()]
        elif f.name == "principal_point":
            value = [float(x) for x in value]
        else:
            value = float(value)
        doc[inverse[f.name]] = value
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False))


# --- depth edge refinement --------------------------------------------------

def box_mean(a: np.ndarray, radius: int) -> np.ndarray:
    """Mean over the (2r+1)^2 window clipped to the image, via summed-area tables."""
    h, w = a.shape
    sat = np.zeros((h + 1, w + 1))
    sat[1:, 1:] = a.cumsum(0).cumsum(1)
    y0 = np.clip(np.arange(h) - radius, 0, h)
    y1 = np.clip(np.arange(h) + radius + 1, 0, h)
    x0 = np.clip(np.arange(w) - radius, 0, w)
    x1 = np.clip(np.arange(w) + radius + 1, 0, w)
    total = sat[y1][:, x1] - sat[y0][:, x1] - sat[y1][:, x0] + sat[y0][:, x0]
    count = (y1 - y0)[:, None] * (x1 - x0)[None, :]
    return total / count


def refine_depth_edges(depth: DepthMap, guide: LinearImage, radius: int = 4,
                       eps: float = 1e-4) -> DepthMap:
    """Snap depth discontinuities onto image edges with a guided filter.

    The depth is modelled as a local linear function of guide luminance inside
    each window; the output is clamped to the input depth range.
    """
    check_aligned(guide, depth)
    if radius >= min(depth.width, depth.height) / 2:
        raise ValueError("radius must be smaller than half the smallest image dimension")
    guide_l = guide.luminance()
    p = depth.data
    mean_i = box_mean(guide_l, radius)
    mean_p = box_mean(p, radius)
    cov_ip = box_mean(guide_l * p, radius) - mean_i * mean_p
    var_i = box_mean(guide_l * guide_l, radius) - mean_i * mean_i
    if np.isinf(eps):
        a = np.zeros_like(p)
    else:
        a = cov_ip / (var_i + eps)
    b = mean_p - a * mean_i
    q = box_mean(a, radius) * guide_l + box_mean(b, radius)
    q = np.clip(q, p.min(), p.max())
    return DepthMap(q)
