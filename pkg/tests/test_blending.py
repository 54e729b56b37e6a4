import numpy as np
import pytest
from scipy import stats

from generate_data import generate_axis_scene, generate_random_axis_scene
from Models.blending import (DEFAULT_M_F, NONE, pick_front, pick_table, sorted_blend,
                             stochastic_color, stochastic_color_table, transmittance_estimate)
from Models.bvh import Hit, collect_hits, table_from_hits, trace_packet
from Models.camera import FisheyeCamera, PinholeCamera, generate_ray, look_at
from Models.gaussian import Ray
from Models.rng import Phase, RngStream

ALPHAS = np.array([0.6, 0.3, 0.8])


def test_sorted_blend_closed_form():
    hits = [Hit(1, 0.5, 2.0), Hit(0, 0.5, 1.0)]
    colors = np.array([[1., 0., 0.], [0., 1., 0.]])
    color, trans = sorted_blend(hits, colors, np.array([0., 0., 1.]))
    np.testing.assert_allclose(color, [0.5, 0.25, 0.25])
    assert trans == pytest.approx(0.25)


def test_three_hit_blend(three_hit_scene, axis_ray):
    hits = collect_hits(three_hit_scene.bvh, three_hit_scene, axis_ray)
    color, trans = sorted_blend(hits[::-1], three_hit_scene.colors, three_hit_scene.background)
    np.testing.assert_allclose(color, [0.6112, 0.1312, 0.2352], atol=1e-12)
    assert trans == pytest.approx(0.056)


def test_empty_ray_is_background(three_hit_scene):
    ray = Ray(np.zeros(3), (1., 0., 0.))
    np.testing.assert_allclose(stochastic_color(ray, three_hit_scene, 16, rng=3),
                               three_hit_scene.background, rtol=1e-14)
    assert sorted_blend([], three_hit_scene.colors, three_hit_scene.background)[1] == 1.0


def test_pick_distribution(three_hit_scene, axis_ray):
    n = 50_000
    pick = pick_front(axis_ray, three_hit_scene, RngStream(8, 0, Phase.FORWARD, n_samples=n))
    ids = np.asarray(pick.id)
    counts = np.array([np.sum(ids == k) for k in range(3)] + [np.sum(ids == NONE)])
    front = np.cumprod(np.r_[1.0, 1.0 - ALPHAS])
    expected = np.r_[front[:3] * ALPHAS, front[3]]
    assert stats.chisquare(counts, n * expected).pvalue > 1e-4
    np.testing.assert_allclose(np.asarray(pick.alpha)[ids == 1], 0.3)
    assert np.all(np.isinf(np.asarray(pick.depth)[ids == NONE]))


def test_stochastic_color_is_unbiased(three_hit_scene, axis_ray):
    exact, _ = sorted_blend(collect_hits(three_hit_scene.bvh, three_hit_scene, axis_ray),
                            three_hit_scene.colors, three_hit_scene.background)
    estimate = stochastic_color(axis_ray, three_hit_scene, M_f=200_000, rng=1)
    # per-lane colours lie in [0, 1], so the standard error is below 0.5 / sqrt(M_f)
    np.testing.assert_allclose(estimate, exact, atol=4 * 0.5 / np.sqrt(200_000))


def test_selection_does_not_depend_on_visit_order(three_hit_scene, axis_ray):
    hits = collect_hits(three_hit_scene.bvh, three_hit_scene, axis_ray)
    rng = RngStream(2, 0, Phase.FORWARD, n_samples=256)
    forward = pick_table(table_from_hits(hits), rng)
    backward = pick_table(table_from_hits(hits[::-1]), rng)
    np.testing.assert_array_equal(forward.ids, backward.ids)
    np.testing.assert_array_equal(forward.depth, backward.depth)


def test_packet_picks_match_single_rays(toy_scene):
    cam = toy_scene.cameras[0]
    rays = cam.generate_rays()
    table = trace_packet(toy_scene.bvh, toy_scene, rays)
    packet = pick_table(table, RngStream(6, rays.pixels, Phase.FORWARD, n_samples=8))
    for k in range(0, len(rays), 7):
        single = pick_front(rays.ray(k), toy_scene, RngStream(6, k, Phase.FORWARD, n_samples=8))
        np.testing.assert_array_equal(packet.ids[k], single.id)
    color, _ = stochastic_color_table(table, toy_scene.colors, toy_scene.background,
                                      RngStream(6, rays.pixels, Phase.FORWARD, n_samples=8))
    assert color.shape == (len(rays), 3)


def test_min_depth_only_picks_behind(three_hit_scene, axis_ray):
    pick = pick_front(axis_ray, three_hit_scene, RngStream(4, 0, Phase.BACKWARD_K, n_samples=500),
                      min_depth=3.0)
    ids = np.asarray(pick.id)
    assert set(ids.tolist()) <= {1, 2, NONE}
    assert np.any(ids == 1) and np.any(ids == 2)


def test_transmittance_estimate(three_hit_scene, axis_ray):
    rng = RngStream(5, 0, Phase.SHADOW, n_samples=40_000)
    est = transmittance_estimate(axis_ray, three_hit_scene, rng)
    assert set(np.unique(est)) <= {0.0, 1.0}
    exact = np.prod(1.0 - ALPHAS)
    assert abs(est.mean() - exact) <= 4 * np.sqrt(exact * (1 - exact) / 40_000)
    lone = generate_axis_scene([0.9], [2.0], [[1., 1., 1.]])
    assert transmittance_estimate(axis_ray, lone, 0, exclude=0) == 1


def test_invalid_sample_count(three_hit_scene, axis_ray):
    assert DEFAULT_M_F == 30
    with pytest.raises(ValueError):
        stochastic_color(axis_ray, three_hit_scene, M_f=0)


def test_fisheye_ray_through_origin_matches_pinhole(three_hit_scene):
    pose = look_at(np.zeros(3), (0., 0., 1.))
    a = generate_ray(PinholeCamera(pose, 9, 9), (4, 4))
    b = generate_ray(FisheyeCamera(pose, 9, 9), (4, 4))
    rng = RngStream(0, 40, Phase.FORWARD, n_samples=64)
    np.testing.assert_array_equal(stochastic_color(a, three_hit_scene, 64, rng),
                                  stochastic_color(b, three_hit_scene, 64, rng))


@pytest.mark.parametrize('k', [1, 2, 4])
def test_transmittance_through_half_opaque_occluders(k, axis_ray):
    scene = generate_axis_scene([0.5] * k, np.arange(1.0, k + 1.0), np.ones((k, 3)))
    n = 200_000
    est = transmittance_estimate(axis_ray, scene, RngStream(k, 0, Phase.SHADOW, n_samples=n))
    stderr = np.sqrt(0.5 ** k * (1 - 0.5 ** k) / n)
    assert abs(est.mean() - 0.5 ** k) <= 4 * stderr


@pytest.mark.slow
def test_stochastic_color_unbiased_over_random_scenes(axis_ray):
    rs = np.random.RandomState(3)
    n_trials = 100_000
    within = 0
    for s in range(100):
        scene = generate_random_axis_scene(rs, rs.randint(1, 65))
        exact, _ = sorted_blend(collect_hits(scene.bvh, scene, axis_ray), scene.colors,
                                scene.background)
        ids = np.asarray(pick_front(axis_ray, scene,
                                    RngStream(s, 0, Phase.FORWARD, n_samples=n_trials)).id)
        samples = np.where((ids == NONE)[:, None], scene.background,
                           scene.colors[np.where(ids == NONE, 0, ids)])
        stderr = samples.std(axis=0, ddof=1) / np.sqrt(n_trials)
        within += bool(np.all(np.abs(samples.mean(axis=0) - exact) <= 4 * stderr + 1e-12))
    assert within >= 99
