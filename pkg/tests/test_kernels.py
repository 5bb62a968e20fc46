import numpy as np
import pytest

from weatheraug import kernels
from weatheraug.imgcore import kitti_rig
from weatheraug.simulator import SimVolume, sample_drops

py = kernels.backend_module("python")
try:
    cy = kernels.backend_module("cython")
except ImportError:  # extension not built
    cy = None

needs_cython = pytest.mark.skipif(cy is None, reason="compiled kernels not built")


def test_backend_name():
    assert kernels.BACKEND in ("cython", "python")
    with pytest.raises(ValueError):
        kernels.backend_module("fortran")


@needs_cython
class TestParity:
    @pytest.mark.parametrize("theta", [0.0, 0.4, 1.9])
    def test_warp(self, rng, theta):
        tex = rng.random((17, 5))
        alpha = rng.random((17, 5))
        c, s = np.cos(theta), np.sin(theta)
        H = np.array([[1.3 * c, -s, 7.2], [s, 1.1 * c, -3.4], [1e-3, -2e-3, 1.0]])
        hinv = np.linalg.inv(H)
        a = py.warp_bilinear(tex, alpha, hinv, -10, -12, 40, 35)
        b = cy.warp_bilinear(tex, alpha, hinv, -10, -12, 40, 35)
        np.testing.assert_allclose(a[0], b[0], atol=1e-12)
        np.testing.assert_allclose(a[1], b[1], atol=1e-12)
        assert a[1].any()

    def test_blend(self, rng):
        base = rng.random((20, 30, 3))
        inten, alpha = rng.random((9, 7)), rng.random((9, 7))
        gain = np.array([0.3, 1.2, 0.8])
        out = []
        for mod in (py, cy):
            canvas = base.copy()
            mod.blend_into(canvas, inten, alpha, gain, 25, -3, 4e-4, 2e-3, 6.3e-4)
            out.append(canvas)
        np.testing.assert_allclose(out[0], out[1], rtol=1e-14)
        assert not np.array_equal(out[0], base)

    def test_project(self):
        rig = kitti_rig(160, 48, ego_speed=8.0)
        state = sample_drops(25.0, rig, (48, 160), SimVolume(0.5, 6.0, 0.3), seed=3)
        args = (state.positions, state.velocities, state.diameters, rig.focal_px, *rig.principal_point,
                rig.exposure_time, 160.0, 48.0)
        a, b = py.project_drops(*args), cy.project_drops(*args)
        keep = a[3].astype(bool)
        assert np.array_equal(keep, b[3].astype(bool))
        assert 0 < keep.sum() < len(keep)
        for x, y in zip(a[:3], b[:3]):
            np.testing.assert_allclose(x[keep], y[keep], rtol=1e-13)
