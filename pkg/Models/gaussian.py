"""Anisotropic 3D Gaussian primitives, rays and the opacity model.

A Gaussian's opacity along a ray is evaluated at its maximum-response point,

    alpha = clamp(sigma * exp(-(x - mu)^T P (x - mu)), 0, ALPHA_MAX),

where P = Sigma^-1 is the precision matrix. (Written with Sigma in the
exponent in some references; the precision is the dimensionally consistent
form and is what 3DGS implementations evaluate.)
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np
from scipy.special import expit

from Models.errors import GeometryError

log = logging.getLogger(__name__)

ALPHA_MIN = 1.0 / 255.0
ALPHA_MAX = 1.0 - 1e-4
SYMMETRY_TOL = 1e-9
UNIT_TOL = 1e-9
DIR_TOL = 1e-12


def _vec(values, name, size=3):
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.shape != (size,):
        raise GeometryError(f'{name} must have {size} components, got {v.shape}')
    if not np.all(np.isfinite(v)):
        raise GeometryError(f'{name} must be finite, got {v}')
    return v


def normalize(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def rotation_matrix(quat):
    """Rotation matrix of a unit quaternion (w, x, y, z)."""
    w, x, y, z = quat
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rotation_matrix_grads(quat):
    """dR/dw, dR/dx, dR/dy, dR/dz as a (4, 3, 3) array."""
    w, x, y, z = quat
    return 2.0 * np.array([
        [[0, -z, y], [z, 0, -x], [-y, x, 0]],
        [[0, y, z], [y, -2 * x, -w], [z, w, -2 * x]],
        [[-2 * y, x, w], [x, 0, z], [-w, z, -2 * y]],
        [[-2 * z, -w, x], [w, -2 * z, y], [x, y, 0]],
    ])


def check_spd(m, name='matrix'):
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        raise GeometryError(f'{name} must be a finite 3x3 matrix')
    if np.max(np.abs(m - m.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(m))):
        raise GeometryError(f'{name} is not symmetric')
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise GeometryError(f'{name} is not positive definite') from None
    return m


@dataclass(frozen=True, eq=False)
class Emissive:
    rgb: np.ndarray

    def __post_init__(self):
        rgb = _vec(self.rgb, 'emissive rgb')
        if np.any(rgb < 0):
            raise GeometryError(f'emissive rgb must be non-negative, got {rgb}')
        object.__setattr__(self, 'rgb', rgb)


@dataclass(frozen=True, eq=False)
class Reflective:
    albedo: np.ndarray
    normal: np.ndarray
    model: str = 'lambert'

    def __post_init__(self):
        albedo = _vec(self.albedo, 'albedo')
        if np.any(albedo < 0) or np.any(albedo > 1):
            raise GeometryError(f'albedo must lie in [0, 1], got {albedo}')
        normal = _vec(self.normal, 'normal')
        n = np.linalg.norm(normal)
        if abs(n - 1.0) > 1e-6:
            raise GeometryError(f'normal must be unit length, got norm {n}')
        if self.model not in ('isotropic', 'lambert'):
            raise GeometryError(f'unknown reflectance model {self.model!r}')
        object.__setattr__(self, 'albedo', albedo)
        object.__setattr__(self, 'normal', normal if abs(n - 1.0) <= UNIT_TOL else normal / n)


Appearance = Union[Emissive, Reflective]


@dataclass(frozen=True, eq=False)
class Ray:
    origin: np.ndarray
    dir: np.ndarray
    t_min: float = 0.0
    t_max: float = np.inf
    valid: bool = True

    def __post_init__(self):
        origin = _vec(self.origin, 'ray origin')
        d = _vec(self.dir, 'ray dir')
        if abs(np.linalg.norm(d) - 1.0) > DIR_TOL:
            raise GeometryError(f'ray dir must be unit length, got norm {np.linalg.norm(d)}')
        if not (0.0 <= self.t_min < self.t_max):
            raise GeometryError(f'invalid ray range [{self.t_min}, {self.t_max}]')
        object.__setattr__(self, 'origin', origin)
        object.__setattr__(self, 'dir', d)

    @classmethod
    def towards(cls, origin, direction, t_min=0.0, t_max=np.inf):
        """Ray with `direction` normalised first."""
        d = np.asarray(direction, dtype=np.float64)
        return cls(origin, d / np.linalg.norm(d), t_min, t_max)

    def at(self, t):
        return self.origin + t * self.dir


@dataclass(frozen=True, eq=False)
class Gaussian:
    mean: np.ndarray
    rotation: np.ndarray
    log_scales: np.ndarray
    density_logit: float
    appearance: Appearance = field(default_factory=lambda: Emissive(np.ones(3)))

    def __post_init__(self):
        mean = _vec(self.mean, 'mean')
        quat = _vec(self.rotation, 'rotation', size=4)
        norm = np.linalg.norm(quat)
        if norm == 0.0:
            raise GeometryError('rotation quaternion is zero')
        log_scales = _vec(self.log_scales, 'log_scales')
        logit = float(self.density_logit)
        if not np.isfinite(logit):
            raise GeometryError(f'density_logit must be finite, got {logit}')
        object.__setattr__(self, 'mean', mean)
        object.__setattr__(self, 'rotation', quat if abs(norm - 1.0) <= UNIT_TOL else quat / norm)
        object.__setattr__(self, 'log_scales', log_scales)
        object.__setattr__(self, 'density_logit', logit)

    @property
    def density(self):
        return float(expit(self.density_logit))

    @cached_property
    def rotation_matrix(self):
        return rotation_matrix(self.rotation)

    @cached_property
    def covariance(self):
        r = self.rotation_matrix
        return r @ np.diag(np.exp(2.0 * self.log_scales)) @ r.T

    @cached_property
    def precision(self):
        r = self.rotation_matrix
        return r @ np.diag(np.exp(-2.0 * self.log_scales)) @ r.T

    def replace(self, **changes):
        values = dict(mean=self.mean, rotation=self.rotation, log_scales=self.log_scales,
                      density_logit=self.density_logit, appearance=self.appearance)
        values.update(changes)
        return Gaussian(**values)


def covariance(g):
    return g.covariance


def precision(g):
    return g.precision


def max_response(ray, g):
    """Ray parameter and point of maximum Gaussian density along the ray."""
    p = g.precision
    pd = p @ ray.dir
    denom = ray.dir @ pd
    if not denom > 0.0:
        raise GeometryError(f'd^T P d = {denom} is not positive')
    t_star = (pd @ (g.mean - ray.origin)) / denom
    t_star = min(max(t_star, ray.t_min), ray.t_max)
    return t_star, ray.at(t_star)


def opacity(g, x):
    q = np.asarray(x, dtype=np.float64) - g.mean
    alpha = g.density * np.exp(-(q @ g.precision @ q))
    return float(min(max(alpha, 0.0), ALPHA_MAX))


def max_response_batch(origins, dirs, t_min, t_max, mean, prec):
    """Vectorised max_response for R rays against one Gaussian.

    Returns (t_star, t_raw); t_raw is the unclamped optimum.
    """
    pd = dirs @ prec
    denom = np.einsum('ri,ri->r', pd, dirs)
    t_raw = np.einsum('ri,ri->r', pd, mean - origins) / denom
    return np.clip(t_raw, t_min, t_max), t_raw


def opacity_batch(origins, dirs, t_star, mean, prec, density):
    q = origins + t_star[:, None] * dirs - mean
    expo = np.einsum('ri,ij,rj->r', q, prec, q)
    return np.clip(density * np.exp(-expo), 0.0, ALPHA_MAX)
