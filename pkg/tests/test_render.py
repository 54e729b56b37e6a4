import numpy as np
import pytest

from generate_data import generate_relight_scene
from Models.camera import FisheyeCamera, PinholeCamera, look_at
from Models.parallel import TILE_SIZE, tile_map, tiles
from Models.render import relight_image, render_image

AXIS_POSE = look_at(np.zeros(3), (0., 0., 1.))


def test_sorted_centre_pixel(three_hit_scene):
    img = render_image(three_hit_scene, PinholeCamera(AXIS_POSE, 9, 9))
    assert (img.width, img.height) == (9, 9)
    np.testing.assert_allclose(img.data[4, 4], [0.6112, 0.1312, 0.2352], atol=1e-6)


def test_output_independent_of_threads(toy_scene):
    cam = PinholeCamera(toy_scene.cameras[0].pose, 40, 40, np.pi / 4)
    assert len(tiles(40 * 40)) == 2
    one = render_image(toy_scene, cam, 'stochastic', M_f=4, seed=3, threads=1)
    four = render_image(toy_scene, cam, 'stochastic', M_f=4, seed=3, threads=4)
    np.testing.assert_array_equal(one.data, four.data)


def test_stochastic_converges_to_sorted(toy_scene):
    cam = toy_scene.cameras[1]
    exact = render_image(toy_scene, cam, 'sorted').data
    estimate = render_image(toy_scene, cam, 'stochastic', M_f=2000, seed=1).data
    assert np.abs(estimate - exact).mean() < 0.01
    assert np.abs(estimate - exact).max() < 0.06


def test_fisheye_outside_circle_is_background(three_hit_scene):
    cam = FisheyeCamera(AXIS_POSE, 9, 9)
    for mode in ('sorted', 'stochastic'):
        img = render_image(three_hit_scene, cam, mode, M_f=8)
        np.testing.assert_allclose(img.data[0, 0], three_hit_scene.background, rtol=1e-6)
        np.testing.assert_allclose(img.data[8, 8], three_hit_scene.background, rtol=1e-6)


def test_pixel_offset_only_moves_random_keys(toy_scene):
    cam = toy_scene.cameras[0]
    a = render_image(toy_scene, cam, 'stochastic', M_f=2, seed=0)
    b = render_image(toy_scene, cam, 'stochastic', M_f=2, seed=0, pixel_offset=cam.width * cam.height)
    assert not np.array_equal(a.data, b.data)
    np.testing.assert_array_equal(render_image(toy_scene, cam).data,
                                  render_image(toy_scene, cam, pixel_offset=81).data)


def test_mode_checks(toy_scene, three_hit_scene):
    cam = PinholeCamera(AXIS_POSE, 3, 3)
    with pytest.raises(ValueError):
        render_image(three_hit_scene, cam, 'painterly')
    with pytest.raises(ValueError):
        render_image(three_hit_scene, cam, 'stochastic', M_f=0)
    relight = generate_relight_scene(size=5)
    with pytest.raises(ValueError):
        render_image(relight, relight.cameras[0], 'sorted')


def test_relight_image():
    scene = generate_relight_scene(size=9)
    img = relight_image(scene, scene.cameras[0], M_f=4, seed=2)
    assert np.all(np.isfinite(img.data)) and np.all(img.data >= 0)
    assert img.data.max() > 0
    dark = relight_image(scene, scene.cameras[0], M_f=4, seed=2, lights=[])
    assert not dark.data.any()


def test_tile_map_keeps_order():
    assert TILE_SIZE == 1024
    parts = tile_map(lambda idx: idx * 2, tiles(2500, size=1000), threads=3)
    np.testing.assert_array_equal(np.concatenate(parts), 2 * np.arange(2500))


@pytest.mark.parametrize('mode', ['sorted', 'stochastic'])
def test_fisheye_centre_matches_pinhole(toy_scene, mode):
    pose = toy_scene.cameras[0].pose
    pin = render_image(toy_scene, PinholeCamera(pose, 9, 9, np.pi / 4), mode, M_f=16, seed=5)
    fish = render_image(toy_scene, FisheyeCamera(pose, 9, 9), mode, M_f=16, seed=5)
    np.testing.assert_allclose(fish.data[4, 4], pin.data[4, 4], atol=1e-6)
