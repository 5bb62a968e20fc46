"""Frame assembly: volumetric rain attenuation, streak blending, fog."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .envmap import (DEFAULT_HEIGHT, EnvironmentMap, drop_fov_means, estimate_environment,
                     estimate_sun_irradiance, sun_direction)
from .imgcore import CameraRig, DepthMap, LinearImage, check_aligned
from .simulator import (SimVolume, StreakBatch, StreakGeometry, classify_drops,
                        project_streaks, sample_drops)
from .streaks import (RenderedStreak, StreakDatabase, circle_of_confusion, defocus_streak,
                      procedural_streak_db, select_streak, shade_factor, warp_streak)

TAU0 = np.sqrt(1e-3) / 50.0  # s, per-pixel dwell time of the streak database
CONTRAST_THRESHOLD = 0.05
EXTINCTION_COEF = 0.312
EXTINCTION_EXP = 0.67


@dataclass(frozen=True)
class RainParams:
    rate: float  # mm/hr
    hg_asymmetry: float = 0.9
    tau0: float = TAU0
    depth_unit_km: bool = True
    k_sun: float = 1.0

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("rain rate must be non-negative")
        if self.tau0 <= 0:
            raise ValueError("tau0 must be positive")
        if not -1 < self.hg_asymmetry < 1:
            raise ValueError("Henyey-Greenstein asymmetry must lie in (-1, 1)")


@dataclass(frozen=True)
class FogParams:
    visibility: float  # V_max, m
    contrast_threshold: float = CONTRAST_THRESHOLD
    airlight: np.ndarray | None = None

    def __post_init__(self):
        if not self.visibility > 0:
            raise ValueError("visibility must be positive")

    @property
    def beta(self) -> float:
        """Extinction coefficient in 1/m from the Koschmieder relation."""
        return -np.log(self.contrast_threshold) / self.visibility


# --- fog-like rain ------------------------------------------------------------

def rain_extinction(rate: float, depth_m, depth_unit_km: bool = True):
    d = np.asarray(depth_m, dtype=np.float64)
    if depth_unit_km:
        d = d / 1000.0
    return np.exp(-EXTINCTION_COEF * rate ** EXTINCTION_EXP * d)


def henyey_greenstein(cos_theta, g: float):
    cos_theta = np.asarray(cos_theta, dtype=np.float64)
    return (1 - g * g) / (4 * np.pi * (1 + g * g - 2 * g * cos_theta) ** 1.5)


def scattering_cosines(rig: CameraRig, shape: tuple[int, int], light_dir) -> np.ndarray:
    light = np.asarray(light_dir, dtype=np.float64)
    light = light / np.linalg.norm(light)
    return rig.pixel_rays(*shape) @ light


def foglike_attenuation(img: LinearImage, depth: DepthMap, params: RainParams,
                        sun_irradiance: float, cos_theta=1.0) -> LinearImage:
    """Extinction by the sub-pixel drop population plus in-scattered airlight.

    ``cos_theta`` is the cosine between each pixel's view ray and the light
    direction (scalar or per-pixel array).
    """
    check_aligned(img, depth)
    if params.rate == 0:
        return img
    transmit = rain_extinction(params.rate, depth.data, params.depth_unit_km)
    airlight = henyey_greenstein(cos_theta, params.hg_asymmetry) * sun_irradiance * (1 - transmit)
    return LinearImage(img.data * transmit[..., None] + np.broadcast_to(airlight, transmit.shape)[..., None])


# --- streak blending ------------------------------------------------------------

def dwell_time(exposure: float, length_px: float) -> float:
    """Time the simulated drop spends on one pixel, capped at the exposure."""
    return exposure / max(1.0, float(length_px))


def blend_into(canvas: np.ndarray, streak: RenderedStreak, exposure: float, tau0: float,
               length_px: float) -> None:
    """In-place exposure-corrected alpha blend of one streak into ``canvas``."""
    tau1 = min(dwell_time(exposure, length_px), exposure)
    kernels.blend_into(canvas, np.ascontiguousarray(streak.intensity), np.ascontiguousarray(streak.alpha),
                       np.ascontiguousarray(streak.gain, dtype=np.float64), int(streak.x0), int(streak.y0),
                       tau1, exposure, tau0)


def blend_streak(base: LinearImage, streak: RenderedStreak, rig: CameraRig, tau0: float = TAU0,
                 streak_length_px: float | None = None) -> LinearImage:
    if streak_length_px is None:
        streak_length_px = streak.geometry.length_px
    canvas = base.data.copy()
    blend_into(canvas, streak, rig.exposure_time, tau0, streak_length_px)
    return LinearImage(canvas)


def restore_luminosity(rained: LinearImage, original: LinearImage) -> LinearImage:
    """Rescale so the joint mean over all channels matches the original."""
    if rained.shape != original.shape:
        raise ValueError("images must share dimensions")
    current = rained.data.mean()
    if current == 0:
        return rained
    return LinearImage(rained.data * (original.data.mean() / current))


# --- fog --------------------------------------------------------------------------

def estimate_airlight(img: LinearImage, sky_fraction: float = 0.2, top_share: float = 0.01) -> np.ndarray:
    """Mean colour of the brightest 1% of the top image rows (global 99th percentile fallback)."""
    rows = int(img.height * sky_fraction)
    if rows >= 1:
        sky = img.data[:rows].reshape(-1, 3)
        lum = sky @ np.array([0.2126, 0.7152, 0.0722])
        n = max(1, int(np.ceil(top_share * len(lum))))
        brightest = np.argsort(lum, kind="stable")[-n:]
        airlight = sky[brightest].mean(axis=0)
        if np.any(airlight > 0):
            return airlight
    return np.percentile(img.data.reshape(-1, 3), 99, axis=0)


def render_fog(img: LinearImage, depth: DepthMap, fog: FogParams, beta_map: np.ndarray | None = None) -> LinearImage:
    """Homogeneous Koschmieder fog; ``beta_map`` (1/m per pixel) overrides the uniform extinction."""
    check_aligned(img, depth)
    if np.isinf(fog.visibility) and beta_map is None:
        return img
    beta = fog.beta if beta_map is None else np.asarray(beta_map, dtype=np.float64)
    transmit = np.exp(-beta * depth.data)[..., None]
    airlight = estimate_airlight(img) if fog.airlight is None else np.asarray(fog.airlight, dtype=np.float64)
    return LinearImage(img.data * transmit + airlight * (1 - transmit))


# --- full frame ---------------------------------------------------------------------

def renderable_geometry(g: StreakGeometry) -> StreakGeometry:
    """Stretch streaks shorter than the drop itself so the sprite covers the drop disk."""
    if g.length_px >= g.image_diameter and g.length_px > 0:
        return g
    start = np.asarray(g.start_px, dtype=np.float64)
    end = np.asarray(g.end_px, dtype=np.float64)
    direction = end - start
    norm = np.hypot(*direction)
    direction = direction / norm if norm > 1e-9 else np.array([0.0, 1.0])
    mid = 0.5 * (start + end)
    half = 0.5 * max(g.image_diameter, 1e-3)
    return StreakGeometry(mid - direction * half, mid + direction * half, g.image_diameter,
                          g.depth, 2 * half, g.drop_diameter, g.drop_position)


@dataclass
class FrameDetails:
    """Intermediate products of one :func:`augment_frame` call."""

    env: EnvironmentMap | None = None
    sun_irradiance: float = 0.0
    attenuated: LinearImage | None = None
    n_drops: int = 0
    visible: StreakBatch | None = None
    coc_px: np.ndarray = field(default_factory=lambda: np.zeros(0))


def render_streaks(canvas: np.ndarray, visible: StreakBatch, env: EnvironmentMap, rig: CameraRig,
                   db: StreakDatabase, rng: np.random.Generator, tau0: float) -> np.ndarray:
    """Warp, shade, defocus and blend visible streaks far to near; returns their CoC in px."""
    order = np.argsort(-visible.depth, kind="stable")
    visible = visible[order]
    fov_means = drop_fov_means(env, visible.drop_position)
    env_mean = env.mean_radiance
    coc = circle_of_confusion(visible.depth, rig)
    for i, geom in enumerate(visible):
        tex = select_streak(db, geom, rng)
        sprite = warp_streak(tex, renderable_geometry(geom))
        sprite = RenderedStreak(sprite.intensity, sprite.alpha, sprite.x0, sprite.y0, geom,
                                gain=shade_factor(fov_means[i], env_mean), homography=sprite.homography)
        sprite = defocus_streak(sprite, float(coc[i]))
        blend_into(canvas, sprite, rig.exposure_time, tau0, geom.length_px)
    return coc


def augment_frame(img: LinearImage, depth: DepthMap, rig: CameraRig, rain: RainParams,
                  streak_db: StreakDatabase | None = None, seed: int = 0,
                  volume: SimVolume = SimVolume(), env_height: int = DEFAULT_HEIGHT,
                  details: FrameDetails | None = None) -> LinearImage:
    """Render rain into one frame.

    Steps: fog-like attenuation of the whole image, then every visible drop
    as a streak in far-to-near order, then a global gain restoring the
    original mean radiance. Deterministic given ``seed``.
    """
    check_aligned(img, depth)
    if rain.rate == 0:
        return img
    streak_db = streak_db if streak_db is not None else procedural_streak_db()
    drop_seq, streak_seq = np.random.SeedSequence(seed).spawn(2)

    env = estimate_environment(img, rig, env_height)
    e_sun = estimate_sun_irradiance(env, rain.k_sun)
    cos_theta = scattering_cosines(rig, img.shape, sun_direction(env))
    attenuated = foglike_attenuation(img, depth, rain, e_sun, cos_theta)

    state = sample_drops(rain.rate, rig, img.shape, volume, seed=int(drop_seq.generate_state(1, np.uint64)[0]))
    _, visible = classify_drops(project_streaks(state, rig, img.shape))
    canvas = attenuated.data.copy()
    rng = np.random.Generator(np.random.PCG64(streak_seq))
    coc = render_streaks(canvas, visible, env, rig, streak_db, rng, rain.tau0)
    np.maximum(canvas, 0.0, out=canvas)
    out = restore_luminosity(LinearImage(canvas), img)

    if details is not None:
        details.env = env
        details.sun_irradiance = e_sun
        details.attenuated = attenuated
        details.n_drops = len(state)
        details.visible = visible
        details.coc_px = coc
    return out
