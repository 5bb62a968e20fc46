"""Streak sprites: database, model selection, warping, shading and defocus."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import signal

from . import kernels
from .envmap import DropFovRegion, EnvironmentMap
from .imgcore import CameraRig, IngestionError
from .simulator import StreakGeometry

log = logging.getLogger(__name__)

N_MODELS = 20
N_OSCILLATIONS = 10
REFRACTED_SHARE = 0.94
REFLECTED_SHARE = 0.06
_DB_NAME = re.compile(r"cv(\d+)_osc(\d+)\.png$")


@dataclass(frozen=True)
class StreakTexture:
    intensity: np.ndarray
    alpha: np.ndarray
    model_index: int
    oscillation_index: int

    def __post_init__(self):
        if self.intensity.shape != self.alpha.shape:
            raise ValueError("intensity and alpha must share dimensions")

    @property
    def aspect(self) -> float:
        h, w = self.intensity.shape
        return h / w


def alpha_from_intensity(intensity: np.ndarray) -> np.ndarray:
    """Opacity of a streak shot on black under white light: normalized intensity."""
    peak = intensity.max()
    if peak <= 0:
        return np.zeros_like(intensity)
    return intensity / peak


def trim(intensity: np.ndarray) -> np.ndarray:
    """Crop to the bounding box of non-zero pixels (unchanged if all zero)."""
    ys, xs = np.nonzero(intensity)
    if len(ys) == 0:
        return intensity
    return intensity[ys.min():ys.max() + 1, xs.min():xs.max() + 1]


def make_texture(intensity: np.ndarray, j: int, k: int) -> StreakTexture:
    intensity = np.ascontiguousarray(trim(np.clip(np.asarray(intensity, dtype=np.float64), 0.0, 1.0)))
    return StreakTexture(intensity, alpha_from_intensity(intensity), j, k)


@dataclass(frozen=True)
class StreakDatabase:
    textures: dict  # (j, k) -> StreakTexture, both 1-based
    procedural: bool = False
    aspects: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        models = sorted({j for j, _ in self.textures})
        if not models:
            raise ValueError("empty streak database")
        aspects = np.array([np.mean([t.aspect for (j, _), t in self.textures.items() if j == m])
                            for m in models])
        object.__setattr__(self, "aspects", aspects)
        object.__setattr__(self, "_models", models)

    def __len__(self) -> int:
        return len(self.textures)

    @property
    def models(self) -> list[int]:
        return self._models

    def oscillations(self, j: int) -> list[int]:
        return sorted(k for jj, k in self.textures if jj == j)


def procedural_texture(aspect: float, phase: float, width: int = 8) -> np.ndarray:
    """Vertical capsule, Gaussian across, with a sinusoidally modulated width."""
    length = max(width, int(round(aspect * width)))
    y, x = np.mgrid[0:length, 0:width] + 0.5
    radius = width / 2.0
    top, bottom = radius, max(radius, length - radius)
    seg_y = np.clip(y, top, bottom)
    dist = np.hypot(x - width / 2.0, y - seg_y)
    cycles = max(1.0, length / (4.0 * width))
    modulation = 1.0 + 0.2 * np.sin(2 * np.pi * cycles * y / length + phase)
    sigma = width / 5.0 * modulation
    return np.exp(-0.5 * (dist / sigma) ** 2)


def procedural_streak_db(seed: int = 0, n_models: int = N_MODELS,
                         n_osc: int = N_OSCILLATIONS, width: int = 8) -> StreakDatabase:
    rng = np.random.Generator(np.random.PCG64(seed))
    aspects = np.geomspace(1.0, 128.0, n_models)
    jitter = rng.uniform(0, 2 * np.pi / n_osc, size=n_models)
    textures = {}
    for j, aspect in enumerate(aspects, start=1):
        for k in range(1, n_osc + 1):
            phase = 2 * np.pi * (k - 1) / n_osc + jitter[j - 1]
            textures[(j, k)] = make_texture(procedural_texture(aspect, phase, width), j, k)
    return StreakDatabase(textures, procedural=True)


def load_streak_db(path, fallback: bool = True, seed: int = 0) -> StreakDatabase:
    """Load ``cv{j}_osc{k}.png`` sprites; fall back to procedural ones if absent."""
    directory = Path(path) if path is not None else None
    if directory is None or not directory.is_dir():
        if not fallback:
            raise FileNotFoundError(f"streak database directory not found: {path}")
        log.info("streak database %s not found, using procedural streaks", path)
        return procedural_streak_db(seed)
    textures = {}
    for fname in sorted(directory.iterdir()):
        m = _DB_NAME.search(fname.name)
        if not m:
            continue
        j, k = int(m.group(1)), int(m.group(2))
        try:
            with Image.open(fname) as im:
                im.load()
                if im.mode not in ("L", "RGB", "RGBA", "P"):
                    raise IngestionError(f"{fname}: expected 8-bit grayscale, got mode {im.mode}")
                arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
        except OSError as exc:
            raise IngestionError(f"{fname}: cannot read streak image ({exc})") from exc
        textures[(j, k)] = make_texture(arr, j, k)
    if not textures:
        if not fallback:
            raise IngestionError(f"{directory}: no cv{{j}}_osc{{k}}.png files")
        return procedural_streak_db(seed)
    return StreakDatabase(textures)


def geometry_aspect(geometry: StreakGeometry) -> float:
    return geometry.length_px / max(geometry.image_diameter, 1e-9)


def select_streak(db: StreakDatabase, geometry: StreakGeometry, rng: np.random.Generator) -> StreakTexture:
    """Closest model by length/width aspect (lowest index on ties), random oscillation."""
    idx = int(np.argmin(np.abs(db.aspects - geometry_aspect(geometry))))
    j = db.models[idx]
    oscs = db.oscillations(j)
    k = oscs[int(rng.integers(0, len(oscs)))]
    return db.textures[(j, k)]


# --- homography warp ------------------------------------------------------------

def homography_from_points(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """DLT homography with h22 = 1 from four correspondences."""
    A = np.zeros((8, 8))
    b = np.zeros(8)
    for i, ((x, y), (u, v)) in enumerate(zip(src, dst)):
        A[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        A[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        b[2 * i], b[2 * i + 1] = u, v
    h = np.linalg.solve(A, b)
    return np.append(h, 1.0).reshape(3, 3)


def similarity_from_segment(src0, src1, dst0, dst1) -> np.ndarray:
    """Rotation + uniform scale + translation taking segment src onto dst."""
    s = complex(*(np.subtract(src1, src0)))
    d = complex(*(np.subtract(dst1, dst0)))
    z = d / s
    a, b = z.real, z.imag
    M = np.array([[a, -b, 0.0], [b, a, 0.0], [0.0, 0.0, 1.0]])
    t = np.asarray(dst0) - M[:2, :2] @ np.asarray(src0)
    M[:2, 2] = t
    return M


def apply_homography(H: np.ndarray, pts) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    hom = np.c_[pts, np.ones(len(pts))] @ H.T
    return hom[:, :2] / hom[:, 2:3]


def control_points(tex_shape: tuple[int, int], geometry: StreakGeometry):
    """(texture, image) control points: start, end, and the two width extremes at mid-length."""
    h, w = tex_shape
    src = np.array([[w / 2, 0.0], [w / 2, h], [0.0, h / 2], [w, h / 2]])
    s = np.asarray(geometry.start_px, dtype=np.float64)
    e = np.asarray(geometry.end_px, dtype=np.float64)
    u = (e - s) / np.hypot(*(e - s))
    n = np.array([u[1], -u[0]])
    m = 0.5 * (s + e)
    half = geometry.image_diameter / 2
    dst = np.array([s, e, m - n * half, m + n * half])
    return src, dst


@dataclass(frozen=True)
class RenderedStreak:
    """Grayscale sprite with per-channel gain, anchored at pixel (x0, y0)."""

    intensity: np.ndarray
    alpha: np.ndarray
    x0: int
    y0: int
    geometry: StreakGeometry
    gain: np.ndarray = field(default_factory=lambda: np.ones(3))
    homography: np.ndarray | None = None

    @property
    def rgb(self) -> np.ndarray:
        return self.intensity[..., None] * self.gain

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        h, w = self.intensity.shape
        return self.x0, self.y0, self.x0 + w, self.y0 + h


def warp_streak(tex: StreakTexture, geometry: StreakGeometry, pad: int = 1) -> RenderedStreak:
    """Warp a texture onto the geometry's image-space start/end/width."""
    if geometry.length_px <= 0:
        raise ValueError("streak geometry has zero length")
    src, dst = control_points(tex.intensity.shape, geometry)
    H = None
    if geometry.image_diameter > 1e-9:
        try:
            H = homography_from_points(src, dst)
        except np.linalg.LinAlgError:
            H = None
    if H is None:
        H = similarity_from_segment(src[0], src[1], dst[0], dst[1])
    h, w = tex.intensity.shape
    corners = np.vstack([apply_homography(H, [[0, 0], [w, 0], [0, h], [w, h]]), dst])
    x0 = int(np.floor(corners[:, 0].min())) - pad
    y0 = int(np.floor(corners[:, 1].min())) - pad
    x1 = int(np.ceil(corners[:, 0].max())) + pad
    y1 = int(np.ceil(corners[:, 1].max())) + pad
    inten, alpha = kernels.warp_bilinear(np.ascontiguousarray(tex.intensity), np.ascontiguousarray(tex.alpha),
                                         np.linalg.inv(H),
                                         x0, y0, y1 - y0, x1 - x0)
    return RenderedStreak(inten, alpha, x0, y0, geometry, homography=H)


# --- photometry -------------------------------------------------------------------

def shade_factor(fov_mean, env_mean) -> np.ndarray:
    return REFRACTED_SHARE * np.asarray(fov_mean, dtype=np.float64) + \
        REFLECTED_SHARE * np.asarray(env_mean, dtype=np.float64)


def shade_streak(streak: RenderedStreak, fov_region: DropFovRegion | np.ndarray,
                 env: EnvironmentMap | np.ndarray) -> RenderedStreak:
    """Scale streak radiance by 94% of the drop-FOV mean plus 6% of the sphere mean."""
    fov_mean = fov_region.mean_radiance if isinstance(fov_region, DropFovRegion) else fov_region
    env_mean = env.mean_radiance if isinstance(env, EnvironmentMap) else env
    return replace(streak, gain=streak.gain * shade_factor(fov_mean, env_mean))


def circle_of_confusion(depth, rig: CameraRig):
    """Blur-disk diameter in pixels for objects at ``depth`` meters."""
    d = np.asarray(depth, dtype=np.float64)
    f, fp = rig.focal_length, rig.focus_plane
    coc_m = (d - fp) * f * f / (d * (fp - f) * rig.f_number)
    return np.abs(coc_m) * rig.pixels_per_meter


def disk_kernel(diameter: float) -> np.ndarray:
    r = diameter / 2.0
    n = int(np.floor(r))
    y, x = np.mgrid[-n:n + 1, -n:n + 1]
    k = (x * x + y * y <= r * r).astype(np.float64)
    return k / k.sum()


def defocus_streak(streak: RenderedStreak, coc_px: float) -> RenderedStreak:
    if coc_px < 0:
        raise ValueError("circle of confusion must be non-negative")
    if coc_px < 1.0:
        return streak
    k = disk_kernel(coc_px)
    if k.shape[0] == 1:
        return streak
    pad = k.shape[0] // 2
    inten = np.maximum(signal.convolve(streak.intensity, k, mode="full"), 0.0)
    alpha = np.clip(signal.convolve(streak.alpha, k, mode="full"), 0.0, 1.0)
    return replace(streak, intensity=inten, alpha=alpha, x0=streak.x0 - pad, y0=streak.y0 - pad)
