import numpy as np
import pytest

from generate_data import generate_relight_scene
from Models.backprop import (backprop_table, backprop_to_params, opacity_param_grads,
                             opacity_param_grads_scene)
from Models.bvh import trace_packet
from Models.camera import RayBatch
from Models.errors import GradientError
from Models.gaussian import Gaussian, Ray, max_response, opacity
from Models.gradcheck import (GRADCHECK_COLUMNS, RAY_OFFSET, fd_gradcheck, gradcheck_rays,
                              relative_error)
from Models.gradients import GradBuffer
from Models.scene import Scene

H = 1e-6


@pytest.fixture
def gaussian():
    return Gaussian(mean=[0.1, -0.05, 3.0], rotation=[0.9, 0.2, -0.3, 0.1],
                    log_scales=np.log([0.3, 0.5, 0.4]), density_logit=0.5)


@pytest.fixture
def ray():
    return Ray.towards(np.zeros(3), (0.2, 0.1, 3.0))


def _alpha(g, ray):
    return opacity(g, max_response(ray, g)[1])


def _numeric(g, ray, group, k):
    if group == 'density_logit':
        plus = g.replace(density_logit=g.density_logit + H)
        minus = g.replace(density_logit=g.density_logit - H)
    else:
        step = np.zeros(getattr(g, group).shape)
        step[k] = H
        # the rotation is renormalised by Gaussian itself
        plus = g.replace(**{group: getattr(g, group) + step})
        minus = g.replace(**{group: getattr(g, group) - step})
    return (_alpha(plus, ray) - _alpha(minus, ray)) / (2 * H)


def _check_against_fd(g, ray):
    grads = opacity_param_grads(g, RayBatch.from_rays([ray]))
    assert grads.alpha[0] == pytest.approx(_alpha(g, ray), rel=1e-12)
    scale = max(abs(grads.alpha[0]), 1e-12)
    for group, size in (('mean', 3), ('rotation', 4), ('log_scales', 3)):
        for k in range(size):
            analytic = getattr(grads, group)[0, k]
            assert analytic == pytest.approx(_numeric(g, ray, group, k), rel=1e-5, abs=1e-7 * scale)
    assert grads.density_logit[0] == pytest.approx(_numeric(g, ray, 'density_logit', 0), rel=1e-6)


def test_opacity_grads_match_finite_differences(gaussian, ray):
    _check_against_fd(gaussian, ray)


def test_opacity_grads_with_clamped_optimum(ray):
    g = Gaussian(mean=[0., 0., 3.], rotation=[1., 0.3, 0., 0.2],
                 log_scales=np.log([0.8, 0.6, 1.0]), density_logit=1.0)
    short = Ray(ray.origin, ray.dir, t_max=2.0)
    assert max_response(short, g)[0] == 2.0
    _check_against_fd(g, short)


def test_saturated_opacity_has_zero_gradient(axis_ray):
    g = Gaussian(mean=[0., 0., 2.], rotation=[1., 0., 0., 0.],
                 log_scales=np.log([0.1, 0.1, 0.1]), density_logit=20.0)
    grads = opacity_param_grads(g, RayBatch.from_rays([axis_ray]))
    assert grads.alpha[0] == pytest.approx(1.0 - 1e-4)
    for group in ('mean', 'rotation', 'log_scales', 'density_logit'):
        assert not np.any(getattr(grads, group))


def test_scene_form_matches_gaussian_form(gaussian, ray, axis_ray):
    scene = Scene([gaussian])
    batch = RayBatch.from_rays([ray, axis_ray])
    a = opacity_param_grads(gaussian, batch)
    b = opacity_param_grads_scene(scene, 0, batch)
    for group in ('alpha', 'mean', 'rotation', 'log_scales', 'density_logit'):
        np.testing.assert_array_equal(getattr(a, group), getattr(b, group))


def test_backprop_chains_upstream(gaussian, ray):
    out = GradBuffer.zeros(2)
    dC_dalpha = np.array([0.5, -1.0, 2.0])
    upstream = np.array([1.0, 0.5, 0.25])
    backprop_to_params(gaussian, ray, dC_dalpha, upstream, out, gid=1, dC_dc=0.3)
    og = opacity_param_grads(gaussian, RayBatch.from_rays([ray]))
    weight = upstream @ dC_dalpha
    np.testing.assert_allclose(out.mean[1], weight * og.mean[0])
    np.testing.assert_allclose(out.rotation[1], weight * og.rotation[0])
    np.testing.assert_allclose(out.appearance[1], 0.3 * upstream)
    assert not out.mean[0].any()


def test_backprop_rejects_non_finite(gaussian, ray):
    with pytest.raises(GradientError) as err:
        backprop_to_params(gaussian, ray, [np.nan, 0., 0.], np.ones(3), GradBuffer.zeros(1), gid=0)
    assert err.value.gaussian_id == 0


def test_backprop_table_matches_per_ray(toy_scene):
    rays = toy_scene.cameras[2].generate_rays()
    table = trace_packet(toy_scene.bvh, toy_scene, rays)
    rs = np.random.RandomState(1)
    dl_dalpha = np.where(table.valid, rs.normal(size=table.alpha.shape), 0.0)
    packet = backprop_table(toy_scene, rays, table, dl_dalpha, GradBuffer.zeros(len(toy_scene)))

    single = GradBuffer.zeros(len(toy_scene))
    for r, c in zip(*np.nonzero(table.valid)):
        gid = int(table.ids[c])
        backprop_to_params(toy_scene.gaussians[gid], rays.ray(r), [dl_dalpha[r, c], 0., 0.],
                           [1., 0., 0.], single, gid)
    np.testing.assert_allclose(packet.flat(), single.flat(), rtol=1e-9, atol=1e-12)


class TestGradcheck:

    def test_passes_on_toy_scene(self, toy_scene):
        ray = gradcheck_rays(toy_scene)[0]
        report = fd_gradcheck(toy_scene, ray)
        assert list(report.frame.columns) == GRADCHECK_COLUMNS
        assert len(report.frame) > 0
        # 14 parameters per hit Gaussian, 3 channels each
        assert len(report.frame) % (14 * 3) == 0
        assert report.passed(1e-4), report.frame.sort_values('rel_err').tail()

    def test_rays_miss_the_mean(self, toy_scene):
        rays = gradcheck_rays(toy_scene)
        assert len(rays) == len(toy_scene)
        for gid, ray in enumerate(rays):
            g = toy_scene.gaussians[gid]
            offset = ray.at(max_response(ray, g)[0]) - g.mean
            closest = np.sqrt(offset @ g.precision @ offset)
            assert 0.25 * RAY_OFFSET < closest <= RAY_OFFSET + 1e-9

    @pytest.mark.parametrize('group', ['mean', 'rotation', 'log_scales'])
    def test_geometry_partials_are_exercised(self, toy_scene, group):
        frame = fd_gradcheck(toy_scene, gradcheck_rays(toy_scene)[0]).frame
        rows = frame[frame['param'].str.startswith(f'gaussians[0].{group}[')]
        assert len(rows) > 0
        assert rows['analytic'].abs().max() > 1e-6
        assert rows['rel_err'].max() <= 1e-4

    def test_step_must_be_in_range(self, toy_scene):
        ray = gradcheck_rays(toy_scene)[0]
        for step in (1e-8, 1e-2):
            with pytest.raises(ValueError):
                fd_gradcheck(toy_scene, ray, step=step)

    def test_rejects_reflective_hits(self):
        scene = generate_relight_scene(size=5)
        with pytest.raises(ValueError):
            fd_gradcheck(scene, gradcheck_rays(scene)[0])

    def test_relative_error_floor(self):
        assert relative_error(1.0, 1.0) == 0.0
        assert relative_error(0.0, 1e-6) == pytest.approx(1e-2)
        assert relative_error(2.0, 1.0) == pytest.approx(0.5)
