import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from weatheraug.envmap import EnvironmentMap, drop_fov_region
from weatheraug.imgcore import IngestionError, kitti_rig
from weatheraug.simulator import StreakGeometry
from weatheraug.streaks import (N_MODELS, N_OSCILLATIONS, RenderedStreak, StreakDatabase,
                                apply_homography, circle_of_confusion, defocus_streak, disk_kernel,
                                load_streak_db, make_texture, procedural_streak_db, select_streak,
                                shade_factor, shade_streak, warp_streak)


def geometry(start, end, diameter, depth=5.0):
    start, end = np.asarray(start, float), np.asarray(end, float)
    return StreakGeometry(start, end, diameter, depth, float(np.hypot(*(end - start))))


def block_texture(h, w):
    return make_texture(np.ones((h, w)), 1, 1)


def write_db(directory, n_models=20, n_osc=10, shape=(24, 6)):
    directory.mkdir(exist_ok=True)
    rng = np.random.default_rng(0)
    for j in range(1, n_models + 1):
        for k in range(1, n_osc + 1):
            arr = (rng.random(shape) * 200 + 55).astype(np.uint8)
            Image.fromarray(arr, mode="L").save(directory / f"cv{j}_osc{k}.png")
    return directory


def alpha_crossings(profile, coords, level=0.5):
    """Coordinates where a sampled profile crosses ``level`` (linear interpolation)."""
    out = []
    for i in range(len(profile) - 1):
        a, b = profile[i] - level, profile[i + 1] - level
        if a == 0:
            out.append(coords[i])
        elif a * b < 0:
            out.append(coords[i] + (coords[i + 1] - coords[i]) * a / (a - b))
    return out


class TestDatabase:
    def test_loads_full_directory(self, tmp_path):
        db = load_streak_db(write_db(tmp_path / "db"), fallback=False)
        assert len(db) == N_MODELS * N_OSCILLATIONS
        assert db.models == list(range(1, 21))
        assert db.oscillations(3) == list(range(1, 11))
        assert not db.procedural

    def test_alpha_is_normalized_intensity(self, tmp_path):
        db = load_streak_db(write_db(tmp_path / "db", 2, 2), fallback=False)
        tex = db.textures[(1, 1)]
        assert tex.alpha.max() == pytest.approx(1.0)
        assert tex.alpha == pytest.approx(tex.intensity / tex.intensity.max())

    def test_black_sprite_has_zero_alpha(self, tmp_path):
        d = tmp_path / "db"
        d.mkdir()
        Image.fromarray(np.zeros((10, 4), np.uint8), mode="L").save(d / "cv1_osc1.png")
        tex = load_streak_db(d, fallback=False).textures[(1, 1)]
        assert not tex.alpha.any()

    def test_trims_black_border(self, tmp_path):
        d = tmp_path / "db"
        d.mkdir()
        arr = np.zeros((20, 10), np.uint8)
        arr[3:15, 2:6] = 255
        Image.fromarray(arr, mode="L").save(d / "cv1_osc1.png")
        assert load_streak_db(d).textures[(1, 1)].intensity.shape == (12, 4)

    def test_missing_directory_falls_back(self, tmp_path):
        a = load_streak_db(tmp_path / "absent", seed=4)
        b = load_streak_db(tmp_path / "absent", seed=4)
        assert a.procedural and len(a) == 200
        assert all(np.array_equal(a.textures[key].intensity, b.textures[key].intensity) for key in a.textures)

    def test_missing_directory_without_fallback(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_streak_db(tmp_path / "absent", fallback=False)

    def test_sixteen_bit_sprite_rejected(self, tmp_path):
        d = write_db(tmp_path / "db", 1, 2)
        Image.fromarray(np.full((10, 4), 40000, np.uint16)).save(d / "cv1_osc3.png")
        with pytest.raises(IngestionError, match="cv1_osc3.png"):
            load_streak_db(d)

    def test_procedural_aspects_increase(self):
        db = procedural_streak_db()
        assert np.all(np.diff(db.aspects) > 0)
        assert all(t.alpha.max() == pytest.approx(1.0) for t in db.textures.values())


class TestSelect:
    def test_exact_aspect_match(self, rng):
        db = procedural_streak_db()
        g = geometry([0, 0], [0, db.aspects[6] * 3.0], 3.0)
        assert select_streak(db, g, rng).model_index == 7

    def test_same_rng_state_same_choice(self):
        db = procedural_streak_db()
        g = geometry([0, 0], [0, 40], 2.0)
        a = [select_streak(db, g, np.random.default_rng(9)) for _ in range(3)]
        assert len({(t.model_index, t.oscillation_index) for t in a}) == 1

    def test_tie_breaks_to_lower_index(self, rng):
        db = StreakDatabase({(1, 1): block_texture(8, 4), (2, 1): block_texture(16, 4)})
        assert list(db.aspects) == [2.0, 4.0]
        assert select_streak(db, geometry([0, 0], [0, 9], 3.0), rng).model_index == 1

    def test_oscillations_cover_model(self):
        db = procedural_streak_db()
        g = geometry([0, 0], [0, 20], 2.0)
        rng = np.random.default_rng(1)
        seen = {select_streak(db, g, rng).oscillation_index for _ in range(300)}
        assert seen == set(range(1, 11))


class TestWarp:
    def test_identity(self, rng):
        tex = make_texture(rng.random((12, 6)) + 0.1, 1, 1)
        sprite = warp_streak(tex, geometry([3, 0], [3, 12], 6.0))
        assert sprite.homography == pytest.approx(np.eye(3), abs=1e-12)
        sl = (slice(-sprite.y0, -sprite.y0 + 12), slice(-sprite.x0, -sprite.x0 + 6))
        assert sprite.intensity[sl] == pytest.approx(tex.intensity, abs=1e-6)
        assert sprite.alpha[sl] == pytest.approx(tex.alpha, abs=1e-6)

    @given(st.floats(0, 2 * np.pi), st.floats(3, 60), st.floats(0.5, 8))
    def test_endpoints_land_exactly(self, angle, length, diameter):
        tex = block_texture(30, 5)
        start = np.array([40.0, 30.0])
        end = start + length * np.array([np.cos(angle), np.sin(angle)])
        sprite = warp_streak(tex, geometry(start, end, diameter))
        mapped = apply_homography(sprite.homography, [[2.5, 0], [2.5, 30]])
        assert np.abs(mapped - [start, end]).max() < 1e-9

    def test_quarter_turn(self):
        tex = block_texture(20, 4)
        sprite = warp_streak(tex, geometry([10, 5], [30, 5], 4.0))
        mapped = apply_homography(sprite.homography, [[2, 0], [2, 20], [0, 10], [4, 10]])
        assert np.abs(mapped - [[10, 5], [30, 5], [20, 7], [20, 3]]).max() < 1e-9
        assert sprite.intensity.shape[1] > sprite.intensity.shape[0]

    def test_doubling_length_doubles_extent(self):
        tex = block_texture(20, 4)
        extents = []
        for length in (20.0, 40.0):
            sprite = warp_streak(tex, geometry([10, 10], [10, 10 + length], 4.0))
            rows = np.flatnonzero((sprite.alpha >= 0.5).any(axis=1))
            extents.append(rows[-1] - rows[0] + 1)
        assert abs(extents[1] - 2 * extents[0]) <= 1

    def test_half_alpha_at_endpoints(self):
        tex = block_texture(30, 4)
        start, end = np.array([20.3, 10.7]), np.array([20.3, 40.7])
        sprite = warp_streak(tex, geometry(start, end, 4.0))
        col = int(np.floor(start[0])) - sprite.x0
        ys = sprite.y0 + np.arange(sprite.alpha.shape[0]) + 0.5
        crossings = alpha_crossings(sprite.alpha[:, col], ys)
        assert len(crossings) == 2
        assert abs(crossings[0] - start[1]) <= 0.5
        assert abs(crossings[1] - end[1]) <= 0.5

    def test_zero_diameter_uses_similarity(self):
        tex = block_texture(20, 4)
        sprite = warp_streak(tex, geometry([0, 0], [12, 16], 0.0))
        H = sprite.homography
        assert H[2] == pytest.approx([0, 0, 1])
        assert H[0, 0] == pytest.approx(H[1, 1]) and H[0, 1] == pytest.approx(-H[1, 0])
        assert np.abs(apply_homography(H, [[2, 0], [2, 20]]) - [[0, 0], [12, 16]]).max() < 1e-9

    def test_zero_length_rejected(self):
        with pytest.raises(ValueError):
            warp_streak(block_texture(10, 4), geometry([5, 5], [5, 5], 2.0))


class TestShading:
    def test_factor_weights(self):
        assert shade_factor([1.0, 0, 0], [0, 1.0, 0]) == pytest.approx([0.94, 0.06, 0.0])

    def test_uniform_environment(self):
        env = EnvironmentMap(np.full((32, 64, 3), 0.3))
        sprite = warp_streak(block_texture(10, 4), geometry([5, 0], [5, 10], 4.0))
        shaded = shade_streak(sprite, drop_fov_region(env, [0, 0, 2.0]), env)
        assert shaded.gain == pytest.approx([0.3] * 3)
        assert shaded.rgb[..., 0] == pytest.approx(0.3 * sprite.intensity)

    def test_linear_in_environment(self, rng):
        env_a = EnvironmentMap(rng.random((32, 64, 3)))
        env_b = EnvironmentMap(2.5 * env_a.data)
        sprite = warp_streak(block_texture(10, 4), geometry([5, 0], [5, 10], 4.0))
        pos = [0.2, 0.1, 3.0]
        a = shade_streak(sprite, drop_fov_region(env_a, pos), env_a)
        b = shade_streak(sprite, drop_fov_region(env_b, pos), env_b)
        assert b.gain == pytest.approx(2.5 * a.gain)


class TestCircleOfConfusion:
    def test_in_focus(self):
        rig = kitti_rig()
        assert circle_of_confusion(rig.focus_plane, rig) == 0.0

    def test_one_meter(self):
        rig = kitti_rig()
        assert circle_of_confusion(1.0, rig) / rig.pixels_per_meter == pytest.approx(1.5015015e-5, rel=1e-6)

    def test_far_limit(self):
        rig = kitti_rig()
        limit = rig.focal_length ** 2 / ((rig.focus_plane - rig.focal_length) * rig.f_number)
        assert circle_of_confusion(1e12, rig) / rig.pixels_per_meter == pytest.approx(limit, rel=1e-9)

    def test_grows_toward_camera(self):
        rig = kitti_rig()
        c = circle_of_confusion(np.array([0.5, 1.0, 2.0, 4.0]), rig)
        assert np.all(np.diff(c) < 0)


class TestDefocus:
    def _sprite(self, intensity):
        return RenderedStreak(intensity, np.clip(intensity, 0, 1), 10, 20, geometry([0, 0], [0, 5], 1.0))

    def test_small_coc_is_identity(self, rng):
        sprite = self._sprite(rng.random((8, 4)))
        assert defocus_streak(sprite, 0.0) is sprite
        assert defocus_streak(sprite, 0.9) is sprite

    def test_negative_coc(self, rng):
        with pytest.raises(ValueError):
            defocus_streak(self._sprite(rng.random((4, 4))), -1.0)

    @pytest.mark.parametrize("coc", [1.5, 3.0, 7.2])
    def test_energy_conserved(self, rng, coc):
        sprite = self._sprite(rng.random((15, 5)))
        out = defocus_streak(sprite, coc)
        assert out.intensity.sum() == pytest.approx(sprite.intensity.sum(), rel=1e-10)

    def test_impulse_becomes_disk(self):
        impulse = np.zeros((1, 1)) + 1.0
        out = defocus_streak(self._sprite(impulse), 5.0)
        support = out.intensity > 1e-12
        assert support.any(axis=0).sum() == 5 and support.any(axis=1).sum() == 5
        assert not support[0, 0] and support[0, 1] and support[2, 2]
        assert (out.x0, out.y0) == (8, 18)
        assert np.allclose(out.intensity[support], out.intensity[support][0])

    def test_disk_kernel_normalized(self):
        for d in (1.0, 2.5, 6.0, 11.3):
            assert disk_kernel(d).sum() == pytest.approx(1.0)
