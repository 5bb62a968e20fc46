"""Batch front-end: ``weatheraug --input 'imgs/*.png' --depth 'depth/{stem}.png' ...``"""

from __future__ import annotations

import argparse
import csv
import glob
import hashlib
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .compositor import FogParams, FrameDetails, RainParams, augment_frame, render_fog
from .envmap import estimate_environment
from .imgcore import (CameraRig, IngestionError, check_aligned, kitti_rig, load_calibration,
                      load_depth, load_image, refine_depth_edges, save_image)
from .streaks import load_streak_db

log = logging.getLogger("weatheraug")

# Standard benchmark conditions; the clear baseline (0 mm/hr, infinite visibility) is not included.
RAIN_PRESETS = (1, 5, 17, 25, 50, 100, 200)
FOG_PRESETS = (750, 375, 150, 75, 50, 40, 30)

EXIT_OK, EXIT_CONFIG, EXIT_ALL_FAILED = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EgoSpeedPolicy:
    """Ego speed in km/hr: fixed when ``low == high``, else uniform on [low, high]."""

    low_kmh: float = 0.0
    high_kmh: float = 0.0

    def __post_init__(self):
        if self.low_kmh < 0 or self.high_kmh < 0:
            raise ValueError("ego speed bounds must be non-negative")
        if self.high_kmh < self.low_kmh:
            raise ValueError("ego speed range is reversed")

    @property
    def fixed(self) -> bool:
        return self.low_kmh == self.high_kmh

    @classmethod
    def parse(cls, text: str) -> "EgoSpeedPolicy":
        text = text.strip()
        if text.startswith("uniform:"):
            lo, _, hi = text[len("uniform:"):].partition("-")
            return cls(float(lo), float(hi))
        value = float(text)
        return cls(value, value)


def ego_speed_for_frame(policy: EgoSpeedPolicy, rng: np.random.Generator) -> float:
    """Ego speed in m/s drawn according to ``policy``."""
    if policy.fixed:
        return policy.low_kmh / 3.6
    return float(rng.uniform(policy.low_kmh, policy.high_kmh)) / 3.6


def frame_seed(job_seed: int, stem: str, label: str) -> int:
    """Stable 64-bit seed from (job seed, frame identifier, condition label)."""
    digest = hashlib.blake2b(f"{job_seed}|{stem}|{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _fmt(value: float) -> str:
    return f"{value:g}"


def rain_label(rate: float) -> str:
    return f"rain{_fmt(rate)}mm"


def fog_label(visibility: float) -> str:
    return f"fog{_fmt(visibility)}m"


@dataclass
class JobConfig:
    inputs: list[Path]
    depth_template: str
    out_dir: Path
    rain_rates: list[float] = field(default_factory=list)
    fog_visibilities: list[float] = field(default_factory=list)
    seed: int = 0
    calib: Path | None = None
    depth_scale: float | None = None
    ego_speed: EgoSpeedPolicy | None = None
    streak_db: Path | None = None
    procedural_streaks: bool = False
    refine_depth: bool = False
    dump_env: bool = False
    dump_streaks: bool = False
    jobs: int = 1

    def validate(self) -> None:
        if not self.rain_rates and not self.fog_visibilities:
            raise ConfigError("at least one rain rate or fog visibility is required")
        if not self.inputs:
            raise ConfigError("no input images matched")
        if any(r < 0 for r in self.rain_rates):
            raise ConfigError("rain rates must be non-negative")
        if any(not v > 0 for v in self.fog_visibilities):
            raise ConfigError("fog visibilities must be positive")
        if self.jobs < 1:
            raise ConfigError("--jobs must be at least 1")

    def depth_path(self, image: Path) -> Path | None:
        stem = image.stem
        if "{stem}" in self.depth_template:
            candidate = Path(self.depth_template.format(stem=stem))
            return candidate if candidate.is_file() else None
        directory = Path(self.depth_template)
        for suffix in (".png", ".pfm"):
            candidate = directory / f"{stem}{suffix}"
            if candidate.is_file():
                return candidate
        return None


@lru_cache(maxsize=4)
def _streak_db(path: str | None, procedural: bool, seed: int):
    return load_streak_db(None if procedural else path, fallback=True, seed=seed)


def _frame_rig(config: JobConfig, shape: tuple[int, int], stem: str) -> CameraRig:
    height, width = shape
    rig = load_calibration(config.calib) if config.calib else kitti_rig(width, height)
    if config.ego_speed is not None:
        rng = np.random.Generator(np.random.PCG64(frame_seed(config.seed, stem, "ego")))
        rig = rig.replace(ego_speed=ego_speed_for_frame(config.ego_speed, rng))
    return rig


def _dump_streaks(path: Path, details: FrameDetails) -> None:
    vis = details.visible
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["start_x", "start_y", "end_x", "end_y", "diameter_px", "depth_m"])
        for i in range(len(vis)):
            writer.writerow([f"{v:.6f}" for v in (*vis.start[i], *vis.end[i], vis.image_diameter[i], vis.depth[i])])


def process_frame(config: JobConfig, image_path: Path) -> dict:
    """Render every condition for one frame; returns per-frame statistics."""
    t0 = time.perf_counter()
    stem = image_path.stem
    depth_path = config.depth_path(image_path)
    if depth_path is None:
        return {"stem": stem, "skipped": f"no depth map for {image_path}"}
    try:
        img = load_image(image_path)
        depth = load_depth(depth_path, config.depth_scale)
        check_aligned(img, depth)
    except IngestionError as exc:
        return {"stem": stem, "skipped": str(exc)}
    if config.refine_depth:
        depth = refine_depth_edges(depth, img)
    rig = _frame_rig(config, img.shape, stem)
    db = _streak_db(str(config.streak_db) if config.streak_db else None, config.procedural_streaks, config.seed)
    if config.dump_env:
        save_image(estimate_environment(img, rig).to_image(), config.out_dir / f"{stem}_env.png")

    base_lum = float(img.luminance().mean())
    deltas, written = {}, []
    for rate in config.rain_rates:
        label = rain_label(rate)
        details = FrameDetails()
        out = augment_frame(img, depth, rig, RainParams(rate), db, frame_seed(config.seed, stem, label),
                            details=details)
        path = config.out_dir / f"{stem}_{label}.png"
        save_image(out, path)
        written.append(path.name)
        deltas[label] = float(out.luminance().mean()) - base_lum
        if config.dump_streaks and details.visible is not None:
            _dump_streaks(config.out_dir / f"{stem}_{label}_streaks.csv", details)
    for vis in config.fog_visibilities:
        label = fog_label(vis)
        out = render_fog(img, depth, FogParams(vis))
        path = config.out_dir / f"{stem}_{label}.png"
        save_image(out, path)
        written.append(path.name)
        deltas[label] = float(out.luminance().mean()) - base_lum
    return {"stem": stem, "written": written, "deltas": deltas, "seconds": time.perf_counter() - t0}


def _process_frame_star(args):
    return process_frame(*args)


def run_job(config: JobConfig) -> dict:
    """Augment every input under every condition; returns the job report."""
    config.validate()
    config.out_dir.mkdir(parents=True, exist_ok=True)
    inputs = sorted(config.inputs)
    t0 = time.perf_counter()
    tasks = [(config, p) for p in inputs]
    if config.jobs == 1 or len(tasks) == 1:
        results = [process_frame(*t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_process_frame_star, tasks))
    done = [r for r in results if "skipped" not in r]
    for r in results:
        if "skipped" in r:
            log.warning("skipping %s: %s", r["stem"], r["skipped"])
    labels = [rain_label(r) for r in config.rain_rates] + [fog_label(v) for v in config.fog_visibilities]
    report = {
        "frames": len(done),
        "skipped": len(results) - len(done),
        "conditions": len(labels),
        "images_written": sum(len(r["written"]) for r in done),
        "wall_seconds": time.perf_counter() - t0,
        "seconds_per_frame": (sum(r["seconds"] for r in done) / len(done)) if done else math.nan,
    }
    for label in labels:
        vals = [r["deltas"][label] for r in done]
        report[f"mean_luminance_delta[{label}]"] = float(np.mean(vals)) if vals else math.nan
    return report


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="weatheraug", description="Render physically-based rain and fog into images.")
    p.add_argument("--input", required=True, action="append", help="image path or glob (repeatable)")
    p.add_argument("--depth", required=True,
                   help="depth path template with {stem}, or a directory of <stem>.png/.pfm")
    p.add_argument("--depth-scale", type=float, default=None,
                   help="meters per stored unit for 16-bit depth PNGs (e.g. 0.001)")
    p.add_argument("--calib", type=Path, default=None, help="calibration file (default: Kitti-like rig)")
    p.add_argument("--rain", type=_float_list, default=[], help="comma list of rain rates, mm/hr")
    p.add_argument("--fog", type=_float_list, default=[], help="comma list of fog visibilities, m")
    p.add_argument("--presets", action="store_true", help="use the 7 standard rain and 7 fog conditions")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ego-speed", default=None, help='km/hr value or "uniform:LO-HI"')
    p.add_argument("--streak-db", type=Path, default=None, help="directory of cv{j}_osc{k}.png streaks")
    p.add_argument("--procedural-streaks", action="store_true", help="ignore --streak-db, use generated streaks")
    p.add_argument("--refine-depth", action="store_true", help="guided-filter depth edges onto the image")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--dump-env", action="store_true", help="also write each frame's environment map")
    p.add_argument("--dump-streaks", action="store_true", help="also write visible streak geometry as CSV")
    p.add_argument("--jobs", type=int, default=1)
    return p


def config_from_args(args: argparse.Namespace) -> JobConfig:
    inputs = sorted({Path(m) for pattern in args.input for m in (glob.glob(pattern) or
                                                                 ([pattern] if Path(pattern).is_file() else []))})
    try:
        ego = EgoSpeedPolicy.parse(args.ego_speed) if args.ego_speed is not None else None
    except ValueError as exc:
        raise ConfigError(f"bad --ego-speed {args.ego_speed!r}: {exc}") from exc
    rain, fog = list(args.rain), list(args.fog)
    if args.presets:
        rain += [r for r in RAIN_PRESETS if r not in rain]
        fog += [v for v in FOG_PRESETS if v not in fog]
    return JobConfig(inputs=inputs, depth_template=args.depth, out_dir=args.out, rain_rates=rain,
                     fog_visibilities=fog, seed=args.seed, calib=args.calib, depth_scale=args.depth_scale,
                     ego_speed=ego, streak_db=args.streak_db, procedural_streaks=args.procedural_streaks,
                     refine_depth=args.refine_depth, dump_env=args.dump_env, dump_streaks=args.dump_streaks,
                     jobs=args.jobs)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        config = config_from_args(args)
        if config.calib is not None:
            load_calibration(config.calib)
        config.validate()
    except (ConfigError, IngestionError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    report = run_job(config)
    for key, value in report.items():
        print(f"{key}: {value}")
    if report["frames"] == 0:
        return EXIT_ALL_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
