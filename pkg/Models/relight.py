"""Shading of reflective Gaussians under point, directional and environment lights.

Each light contributes f_r(w_in) * L_e(w_in) * T_hat, where T_hat is the
binary shadow-ray transmittance estimate from the shading point towards the
light. The shading Gaussian itself is excluded from its own shadow rays.
Environment lights are integrated with `env_samples` uniform sphere
directions, weight 4 pi / env_samples each.

Colour and gradient evaluation consume the same light samples: both derive
their shadow and direction streams from the caller's key, so the gradient is
exact for the colour actually produced.
"""
import logging
from dataclasses import dataclass

import numpy as np

from Models.blending import NONE, SHADOW_EPS, transmittance_table
from Models.bvh import trace_packet
from Models.camera import RayBatch
from Models.envmap import check_radiance, envmap_lookup, uniform_sphere
from Models.errors import GeometryError
from Models.gaussian import Reflective, _vec
from Models.rng import Phase, RngStream

log = logging.getLogger(__name__)

FOUR_PI = 4.0 * np.pi


def _non_negative(values, name):
    v = _vec(values, name)
    if np.any(v < 0):
        raise GeometryError(f'{name} must be non-negative, got {v}')
    return v


@dataclass(frozen=True, eq=False)
class PointLight:
    position: np.ndarray
    intensity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'position', _vec(self.position, 'light position'))
        object.__setattr__(self, 'intensity', _non_negative(self.intensity, 'light intensity'))


@dataclass(frozen=True, eq=False)
class DirectionalLight:
    """`dir` points from the scene towards the light."""
    dir: np.ndarray
    irradiance: np.ndarray

    def __post_init__(self):
        d = _vec(self.dir, 'light dir')
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-6:
            raise GeometryError(f'light dir must be unit length, got norm {n}')
        object.__setattr__(self, 'dir', d / n)
        object.__setattr__(self, 'irradiance', _non_negative(self.irradiance, 'light irradiance'))


@dataclass(frozen=True, eq=False)
class EnvmapLight:
    radiance: np.ndarray
    source: str = 'constant'

    def __post_init__(self):
        object.__setattr__(self, 'radiance', check_radiance(self.radiance))

    @property
    def width(self):
        return self.radiance.shape[1]

    @property
    def height(self):
        return self.radiance.shape[0]


def reflectance(albedo, normals, lambert, w_in):
    """f_r per shading point: albedo / 4 pi, or albedo * max(0, n.w) / pi."""
    cos = np.maximum(0.0, np.einsum('pi,pi->p', normals, w_in))
    factor = np.where(lambert, cos / np.pi, 1.0 / FOUR_PI)
    return albedo * factor[:, None]


def _shadow(scene, points, w_in, t_max, exclude, rng):
    n = points.shape[0]
    rays = RayBatch(points, w_in, np.full(n, SHADOW_EPS), t_max, t_max > SHADOW_EPS,
                    np.arange(n, dtype=np.int64))
    table = trace_packet(scene.bvh, scene, rays)
    return transmittance_table(table, rng, exclude=exclude)[:, 0]


def _light_samples(scene, lights, points, exclude, rng, env_samples):
    """Yields (w_in, L_e, T_hat, weight) per light sample for every point."""
    n = points.shape[0]
    for li, light in enumerate(lights):
        if isinstance(light, PointLight):
            vec = light.position - points
            dist = np.linalg.norm(vec, axis=1)
            at_light = dist == 0.0
            if at_light.any():
                log.warning('%d shading points coincide with point light %d; skipped',
                            int(at_light.sum()), li)
            safe = np.where(at_light, 1.0, dist)
            w_in = np.where(at_light[:, None], np.array([0.0, 0.0, 1.0]), vec / safe[:, None])
            radiance = np.where(at_light[:, None], 0.0, light.intensity / (safe * safe)[:, None])
            trans = _shadow(scene, points, w_in, np.where(at_light, 0.0, dist - SHADOW_EPS),
                            exclude, rng.split(Phase.SHADOW, li))
            yield w_in, radiance, trans, 1.0
        elif isinstance(light, DirectionalLight):
            w_in = np.broadcast_to(light.dir, (n, 3))
            trans = _shadow(scene, points, w_in, np.full(n, np.inf), exclude,
                            rng.split(Phase.SHADOW, li))
            yield w_in, np.broadcast_to(light.irradiance, (n, 3)), trans, 1.0
        elif isinstance(light, EnvmapLight):
            if env_samples < 1:
                raise ValueError(f'env_samples must be >= 1, got {env_samples}')
            directions = rng.split(Phase.ENVMAP, li)
            for s in range(env_samples):
                xi = directions.uniform(2).reshape(n, 2)
                w_in = uniform_sphere(xi[:, 0], xi[:, 1])
                trans = _shadow(scene, points, w_in, np.full(n, np.inf), exclude,
                                rng.split(Phase.SHADOW, li, s))
                yield w_in, envmap_lookup(light.radiance, w_in), trans, FOUR_PI / env_samples
        else:
            raise TypeError(f'unknown light type {type(light).__name__}')


def _shade(scene, albedo, normals, lambert, exclude, points, rng, lights, env_samples,
           upstream=None):
    n = points.shape[0]
    color = np.zeros((n, 3))
    d_albedo = np.zeros((n, 3))
    d_normal = np.zeros((n, 3))
    for w_in, radiance, trans, weight in _light_samples(scene, lights, points, exclude, rng,
                                                        env_samples):
        incoming = weight * radiance * trans[:, None]
        color += reflectance(albedo, normals, lambert, w_in) * incoming
        if upstream is not None:
            cos = np.einsum('pi,pi->p', normals, w_in)
            factor = np.where(lambert, np.maximum(cos, 0.0) / np.pi, 1.0 / FOUR_PI)
            d_albedo += upstream * incoming * factor[:, None]
            lit = lambert & (cos > 0.0)
            scalar = np.einsum('pc,pc->p', upstream, albedo * incoming) / np.pi
            d_normal += np.where(lit, scalar, 0.0)[:, None] * w_in
    if upstream is None:
        return color
    d_normal -= normals * np.einsum('pi,pi->p', d_normal, normals)[:, None]
    return color, d_albedo, d_normal


def _as_stream(rng, n=1):
    if isinstance(rng, RngStream):
        return rng
    return RngStream.pairs(rng, np.zeros(n, dtype=np.int64), np.arange(n), Phase.SHADE)


def _single(g, lights, scene):
    if not isinstance(g.appearance, Reflective):
        raise GeometryError('shade needs a reflective Gaussian')
    app = g.appearance
    lights = scene.lights if lights is None else lights
    return app.albedo[None], app.normal[None], np.array([app.model == 'lambert']), lights


def shade(g, x, w_out, lights, scene, rng=0, env_samples=1, gid=NONE):
    """Outgoing radiance of reflective Gaussian `g` at point `x`.

    Both reflectance models are view independent, so `w_out` does not enter
    the result. `gid` is g's index in `scene` (excluded from shadow rays).
    """
    albedo, normals, lambert, lights = _single(g, lights, scene)
    points = _vec(x, 'shading point')[None]
    return _shade(scene, albedo, normals, lambert, np.array([gid]), points, _as_stream(rng),
                  lights, env_samples)[0]


def shade_gradient(g, x, w_out, lights, scene, rng, upstream, env_samples=1, gid=NONE):
    """(dL/dalbedo, dL/dnormal) of shade() at the same light samples."""
    albedo, normals, lambert, lights = _single(g, lights, scene)
    points = _vec(x, 'shading point')[None]
    upstream = np.asarray(upstream, dtype=np.float64).reshape(1, 3)
    _, d_albedo, d_normal = _shade(scene, albedo, normals, lambert, np.array([gid]), points,
                                   _as_stream(rng), lights, env_samples, upstream)
    return d_albedo[0], d_normal[0]


def shade_table(scene, gids, points, rng, lights=None, env_samples=1, upstream=None):
    """shade() for many (Gaussian, point) pairs; `rng` is elementwise over them."""
    gids = np.asarray(gids, dtype=np.int64)
    lights = scene.lights if lights is None else lights
    return _shade(scene, scene.albedos[gids], scene.normals[gids], scene.lambert[gids], gids,
                  np.asarray(points, dtype=np.float64).reshape(-1, 3), rng, lights, env_samples,
                  upstream)


def _pick_points(rays, ids, depth, rows, lanes):
    return rays.origins[rows] + depth[rows, lanes, None] * rays.dirs[rows]


def pick_colors(scene, rays, ids, depth, seed, phase, lights=None, env_samples=1):
    """Colour of every lane pick (rays x lanes x 3): emissive colour,
    shaded colour for reflective Gaussians, background where nothing was picked."""
    colors = np.broadcast_to(scene.background, ids.shape + (3,)).copy()
    sel = ids != NONE
    if not sel.any():
        return colors
    safe = np.where(sel, ids, 0)
    emissive = sel & ~scene.reflective[safe]
    colors[emissive] = scene.colors[ids[emissive]]
    rows, lanes = np.nonzero(sel & scene.reflective[safe])
    if rows.size:
        rng = RngStream.pairs(seed, rays.pixels[rows], lanes, phase)
        points = _pick_points(rays, ids, depth, rows, lanes)
        colors[rows, lanes] = shade_table(scene, ids[rows, lanes], points, rng, lights, env_samples)
    return colors


def accumulate_pick_grads(scene, rays, ids, depth, seed, phase, upstream, out, lights=None,
                          env_samples=1):
    """Add dL/d(appearance) for lane picks into a GradBuffer.

    `upstream` is dL/dc per lane (rays x lanes x 3). Emissive picks receive it
    directly; reflective picks go through shade_gradient at the light samples
    used by pick_colors with the same (seed, phase).
    """
    sel = (ids != NONE) & np.any(upstream != 0.0, axis=-1)
    if not sel.any():
        return out
    safe = np.where(sel, ids, 0)
    rows, lanes = np.nonzero(sel & ~scene.reflective[safe])
    np.add.at(out.appearance, ids[rows, lanes], upstream[rows, lanes])
    rows, lanes = np.nonzero(sel & scene.reflective[safe])
    if rows.size:
        rng = RngStream.pairs(seed, rays.pixels[rows], lanes, phase)
        points = _pick_points(rays, ids, depth, rows, lanes)
        _, d_albedo, d_normal = shade_table(scene, ids[rows, lanes], points, rng, lights,
                                            env_samples, upstream=upstream[rows, lanes])
        np.add.at(out.appearance, ids[rows, lanes], d_albedo)
        np.add.at(out.normal, ids[rows, lanes], d_normal)
    return out
