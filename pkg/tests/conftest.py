import numpy as np
import pytest

from weatheraug.imgcore import DepthMap, LinearImage, kitti_rig

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(number, title, passed, detail=""):
        lines.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title} {detail}".rstrip())
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash[_ACCEPTANCE]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_rig():
    return kitti_rig(160, 48)


@pytest.fixture
def gray_frame():
    img = LinearImage(np.full((48, 160, 3), 0.3))
    depth = DepthMap(np.full((48, 160), 20.0))
    return img, depth


def write_dataset(root, n_frames, width=64, height=24, depth_format="pfm", seed=0, unit_scale=0.001):
    """Write ``n_frames`` street scenes (8-bit sRGB PNG plus depth) and a long-lens calibration."""
    from weatheraug.imgcore import save_calibration, save_depth_png, save_image, write_pfm
    from weatheraug.synthetic import street_scene

    root.mkdir(parents=True, exist_ok=True)
    (root / "img").mkdir(exist_ok=True)
    (root / "depth").mkdir(exist_ok=True)
    rig = kitti_rig(width, height, pixels_per_meter=1000.0 / 0.006)
    for i in range(n_frames):
        img, depth, _ = street_scene(seed=seed + i, width=width, height=height, rig=rig)
        save_image(img, root / "img" / f"frame{i:03d}.png")
        if depth_format == "pfm":
            write_pfm(root / "depth" / f"frame{i:03d}.pfm", depth.data)
        else:
            save_depth_png(np.minimum(depth.data, 60.0), root / "depth" / f"frame{i:03d}.png", unit_scale)
    save_calibration(rig, root / "calib.yaml")
    return root


@pytest.fixture
def dataset(tmp_path):
    def make(n_frames, **kwargs):
        return write_dataset(tmp_path / "data", n_frames, **kwargs)

    return make
