import numpy as np
import pytest

from generate_data import generate_axis_scene
from Models.blending import NONE
from Models.camera import RayBatch
from Models.envmap import (HEADER, MAGIC, constant_envmap, envmap_lookup, read_envmap,
                           uniform_sphere, write_envmap)
from Models.errors import GeometryError, SceneError
from Models.gaussian import Emissive, Gaussian, Reflective, normalize
from Models.gradients import GradBuffer
from Models.relight import (DirectionalLight, EnvmapLight, PointLight, accumulate_pick_grads,
                            pick_colors, reflectance, shade, shade_gradient, shade_table)
from Models.rng import Phase, RngStream
from Models.scene import Scene

ALBEDO = np.array([0.5, 0.4, 0.2])
N_POINTS = 20_000


def _surfel(model='lambert', normal=(0., 0., 1.), mean=(0., 0., 0.), albedo=ALBEDO):
    return Gaussian(mean, (1., 0., 0., 0.), np.log([0.05, 0.05, 0.05]), 2.0,
                    Reflective(albedo, normalize(np.asarray(normal, dtype=np.float64)), model))


def _points_stream(seed=0, n=N_POINTS):
    return RngStream.pairs(seed, np.arange(n), np.zeros(n, dtype=np.int64), Phase.SHADE)


class TestReflectance:

    def test_models(self):
        normals = np.array([[0., 0., 1.]] * 3)
        w_in = np.array([[0., 0., 1.], [0., 0.6, 0.8], [0., 0., -1.]])
        albedo = np.ones((3, 3))
        iso = reflectance(albedo, normals, np.zeros(3, dtype=bool), w_in)
        np.testing.assert_allclose(iso, np.full((3, 3), 1.0 / (4 * np.pi)))
        lam = reflectance(albedo, normals, np.ones(3, dtype=bool), w_in)
        np.testing.assert_allclose(lam[:, 0], [1.0 / np.pi, 0.8 / np.pi, 0.0])


class TestShade:

    def test_point_light(self):
        g = _surfel()
        scene = Scene([g], lights=[PointLight((0., 0., 2.), (8., 8., 8.))])
        color = shade(g, np.zeros(3), (0., 0., 1.), None, scene, gid=0)
        np.testing.assert_allclose(color, ALBEDO * 2.0 / np.pi, rtol=1e-12)

    def test_directional_light(self):
        light = DirectionalLight((0.6, 0., 0.8), (3., 3., 3.))
        for model, factor in (('lambert', 0.8 / np.pi), ('isotropic', 1.0 / (4 * np.pi))):
            g = _surfel(model)
            scene = Scene([g], lights=[light])
            np.testing.assert_allclose(shade(g, np.zeros(3), None, None, scene, gid=0),
                                       3.0 * factor * ALBEDO, rtol=1e-12)

    def test_light_behind_surface_is_dark(self):
        g = _surfel()
        scene = Scene([g], lights=[PointLight((0., 0., -2.), (8., 8., 8.))])
        assert not shade(g, np.zeros(3), None, None, scene, gid=0).any()

    def test_shadow_occluder(self):
        occluder = generate_axis_scene([0.4], [1.0], [[1., 1., 1.]])
        g = _surfel('isotropic', albedo=np.ones(3))
        scene = occluder.replace(gaussians=list(occluder.gaussians) + [g])
        lights = [PointLight((0., 0., 2.), (4., 4., 4.))]
        color = shade_table(scene, np.full(N_POINTS, 1), np.zeros((N_POINTS, 3)),
                            _points_stream(), lights)
        trans = color[:, 0] * 4 * np.pi
        assert set(np.round(np.unique(trans), 12)) <= {0.0, 1.0}
        assert abs(trans.mean() - 0.6) <= 4 * np.sqrt(0.6 * 0.4 / N_POINTS)

    def test_constant_envmap(self):
        radiance = (0.5, 1.0, 2.0)
        light = EnvmapLight(constant_envmap(radiance, 4, 2))
        iso = _surfel('isotropic')
        scene = Scene([iso], lights=[light])
        np.testing.assert_allclose(shade(iso, np.zeros(3), None, None, scene, env_samples=4, gid=0),
                                   ALBEDO * radiance, rtol=1e-12)

        lam = _surfel('lambert')
        scene = Scene([lam], lights=[light])
        color = shade_table(scene, np.zeros(N_POINTS, dtype=np.int64), np.zeros((N_POINTS, 3)),
                            _points_stream(3))
        np.testing.assert_allclose(color.mean(axis=0), ALBEDO * radiance, rtol=0.05)

    def test_env_samples_must_be_positive(self):
        g = _surfel()
        scene = Scene([g], lights=[EnvmapLight(constant_envmap((1., 1., 1.)))])
        with pytest.raises(ValueError):
            shade(g, np.zeros(3), None, None, scene, env_samples=0, gid=0)

    def test_emissive_gaussian_cannot_be_shaded(self):
        g = Gaussian(np.zeros(3), (1., 0., 0., 0.), np.zeros(3), 0.0, Emissive((1., 1., 1.)))
        with pytest.raises(GeometryError):
            shade(g, np.zeros(3), None, [], Scene([g]))

    def test_gradient_matches_finite_differences(self):
        normal = normalize(np.array([0.2, 0.1, 1.0]))
        lights = [PointLight((1., 0., 2.), (5., 4., 3.)), DirectionalLight((0., 0.6, 0.8), (1., 1., 1.))]
        upstream = np.array([1.0, 0.5, 0.25])

        def loss(albedo=ALBEDO, n=normal):
            g = _surfel(normal=n, albedo=albedo)
            return upstream @ shade(g, np.zeros(3), None, lights, Scene([g]), rng=7, gid=0)

        g = _surfel(normal=normal)
        d_albedo, d_normal = shade_gradient(g, np.zeros(3), None, lights, Scene([g]), 7, upstream,
                                            gid=0)
        h = 1e-6
        for k in range(3):
            step = np.eye(3)[k] * h
            numeric = (loss(albedo=ALBEDO + step) - loss(albedo=ALBEDO - step)) / (2 * h)
            assert d_albedo[k] == pytest.approx(numeric, rel=1e-6)
            numeric = (loss(n=normal + step) - loss(n=normal - step)) / (2 * h)
            assert d_normal[k] == pytest.approx(numeric, rel=1e-5, abs=1e-9)


class TestLights:

    def test_validation(self):
        with pytest.raises(GeometryError):
            PointLight((0., 0., 0.), (-1., 0., 0.))
        with pytest.raises(GeometryError):
            DirectionalLight((0., 0., 2.), (1., 1., 1.))
        with pytest.raises(SceneError):
            EnvmapLight(-np.ones((1, 1, 3)))


class TestPicks:

    @pytest.fixture
    def mixed(self):
        emissive = generate_axis_scene([0.5], [2.0], [[0.1, 0.2, 0.3]], background=(0.7, 0.7, 0.7))
        lit = _surfel(normal=(1., 0., 0.), mean=(0., 0., 4.))
        return emissive.replace(gaussians=list(emissive.gaussians) + [lit],
                                lights=[PointLight((1., 0., 4.), (2., 2., 2.))])

    def test_pick_colors(self, mixed, axis_ray):
        rays = RayBatch.from_rays([axis_ray])
        ids = np.array([[0, 1, NONE]])
        depth = np.array([[2.0, 4.0, np.inf]])
        colors = pick_colors(mixed, rays, ids, depth, 5, Phase.SHADE)
        np.testing.assert_array_equal(colors[0, 0], [0.1, 0.2, 0.3])
        np.testing.assert_allclose(colors[0, 1], ALBEDO * 2.0 / np.pi, rtol=1e-12)
        np.testing.assert_array_equal(colors[0, 2], mixed.background)

    def test_accumulate_pick_grads(self, mixed, axis_ray):
        rays = RayBatch.from_rays([axis_ray])
        ids = np.array([[0, 1, NONE, 0]])
        depth = np.array([[2.0, 4.0, np.inf, 2.0]])
        upstream = np.array([[[1., 0., 0.], [0.5, 1., 2.], [3., 3., 3.], [0., 1., 0.]]])
        out = accumulate_pick_grads(mixed, rays, ids, depth, 5, Phase.SHADE, upstream,
                                    GradBuffer.zeros(2))
        np.testing.assert_array_equal(out.appearance[0], [1., 1., 0.])
        np.testing.assert_allclose(out.appearance[1], 2.0 * upstream[0, 1] / np.pi, rtol=1e-12)
        assert not out.mean.any()


class TestEnvmap:

    @pytest.fixture
    def grid(self):
        return np.arange(24, dtype=np.float64).reshape(2, 4, 3) / 4.0

    def test_texel_centre_lookup(self, grid):
        theta, phi = np.pi / 4, 2 * np.pi * 1.5 / 4 - np.pi
        d = [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)]
        np.testing.assert_allclose(envmap_lookup(grid, d)[0], grid[0, 1], atol=1e-12)
        np.testing.assert_allclose(envmap_lookup(constant_envmap((1., 2., 3.), 8, 4),
                                                 uniform_sphere(np.linspace(0, 0.99, 5),
                                                                np.linspace(0, 0.99, 5))),
                                   np.tile([1., 2., 3.], (5, 1)))

    def test_azimuth_wraps(self, grid):
        value = envmap_lookup(grid, [-1.0, -1e-15, 0.0])[0]
        expected = 0.25 * (grid[0, 0] + grid[0, 3] + grid[1, 0] + grid[1, 3])
        np.testing.assert_allclose(value, expected, atol=1e-9)

    def test_file_round_trip(self, grid, tmp_path):
        path = tmp_path / 'sky.envf'
        write_envmap(path, grid)
        np.testing.assert_array_equal(read_envmap(path), grid)

    def test_bad_files(self, tmp_path):
        bad_magic = tmp_path / 'magic.envf'
        bad_magic.write_bytes(HEADER.pack(b'NOPE', 1, 1, 3) + np.zeros(3, '<f4').tobytes())
        truncated = tmp_path / 'short.envf'
        truncated.write_bytes(MAGIC + b'\x01\x00')
        short_body = tmp_path / 'body.envf'
        short_body.write_bytes(HEADER.pack(MAGIC, 2, 2, 3) + np.zeros(3, '<f4').tobytes())
        for path in (bad_magic, truncated, short_body):
            with pytest.raises(SceneError):
                read_envmap(path)

    def test_uniform_sphere(self):
        rs = np.random.RandomState(2)
        d = uniform_sphere(rs.uniform(size=50_000), rs.uniform(size=50_000))
        np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0)
        np.testing.assert_allclose(d.mean(axis=0), 0.0, atol=0.02)
