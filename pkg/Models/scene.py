from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from Models.bvh import K_SIGMA, build
from Models.errors import GeometryError
from Models.gaussian import Emissive, Gaussian, Reflective


@dataclass(frozen=True, eq=False)
class Scene:
    """Immutable Gaussians + lights + background + cameras.

    Array views (`means`, `precisions`, ...) and the BVH are built lazily
    and cached; a changed scene is a new Scene.
    """
    gaussians: tuple = ()
    lights: tuple = ()
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))
    cameras: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, 'gaussians', tuple(self.gaussians))
        object.__setattr__(self, 'lights', tuple(self.lights))
        object.__setattr__(self, 'cameras', tuple(self.cameras))
        bg = np.asarray(self.background, dtype=np.float64).reshape(-1)
        if bg.shape != (3,) or not np.all(np.isfinite(bg)) or np.any(bg < 0):
            raise GeometryError(f'background must be three non-negative reals, got {bg}')
        object.__setattr__(self, 'background', bg)

    def __len__(self):
        return len(self.gaussians)

    def replace(self, **changes):
        values = dict(gaussians=self.gaussians, lights=self.lights,
                      background=self.background, cameras=self.cameras)
        values.update(changes)
        return Scene(**values)

    @cached_property
    def means(self):
        return np.array([g.mean for g in self.gaussians]).reshape(-1, 3)

    @cached_property
    def quats(self):
        return np.array([g.rotation for g in self.gaussians]).reshape(-1, 4)

    @cached_property
    def log_scales(self):
        return np.array([g.log_scales for g in self.gaussians]).reshape(-1, 3)

    @cached_property
    def density_logits(self):
        return np.array([g.density_logit for g in self.gaussians], dtype=np.float64)

    @cached_property
    def densities(self):
        return np.array([g.density for g in self.gaussians], dtype=np.float64)

    @cached_property
    def covariances(self):
        return np.array([g.covariance for g in self.gaussians]).reshape(-1, 3, 3)

    @cached_property
    def precisions(self):
        return np.array([g.precision for g in self.gaussians]).reshape(-1, 3, 3)

    @cached_property
    def reflective(self):
        return np.array([isinstance(g.appearance, Reflective) for g in self.gaussians], dtype=bool)

    @cached_property
    def colors(self):
        """Emissive RGB per Gaussian (zero rows for reflective Gaussians)."""
        return np.array([g.appearance.rgb if isinstance(g.appearance, Emissive) else np.zeros(3)
                         for g in self.gaussians]).reshape(-1, 3)

    @cached_property
    def albedos(self):
        return np.array([g.appearance.albedo if isinstance(g.appearance, Reflective) else np.zeros(3)
                         for g in self.gaussians]).reshape(-1, 3)

    @cached_property
    def normals(self):
        return np.array([g.appearance.normal if isinstance(g.appearance, Reflective)
                         else np.array([0.0, 0.0, 1.0]) for g in self.gaussians]).reshape(-1, 3)

    @cached_property
    def lambert(self):
        return np.array([isinstance(g.appearance, Reflective) and g.appearance.model == 'lambert'
                         for g in self.gaussians], dtype=bool)

    @cached_property
    def bvh(self):
        return build(self.means, self.covariances, K_SIGMA)

    @property
    def is_relightable(self):
        return bool(self.reflective.any())

    @property
    def extent(self):
        if not len(self):
            return 1.0
        return float(max(np.max(np.linalg.norm(self.means - self.means.mean(axis=0), axis=1)), 1e-3))


def scene_from_arrays(template, means, quats, log_scales, density_logits, appearance, normals=None):
    """Scene with every Gaussian rebuilt from parameter arrays.

    `appearance` holds emissive RGB or reflective albedo per Gaussian,
    following the appearance type of `template`'s Gaussians.
    """
    gaussians = []
    for k, g in enumerate(template.gaussians):
        if isinstance(g.appearance, Reflective):
            app = Reflective(appearance[k], normals[k] if normals is not None else g.appearance.normal,
                             g.appearance.model)
        else:
            app = Emissive(appearance[k])
        gaussians.append(Gaussian(means[k], quats[k], log_scales[k], density_logits[k], app))
    return template.replace(gaussians=gaussians)


def emissive_proxy(scene):
    """Scene whose reflective Gaussians glow with their albedo instead."""
    gaussians = [g.replace(appearance=Emissive(g.appearance.albedo))
                 if isinstance(g.appearance, Reflective) else g for g in scene.gaussians]
    return scene.replace(gaussians=gaussians)


def with_geometry(scene, geometry):
    """`scene`'s appearances on `geometry`'s means, rotations, scales and densities."""
    if len(scene) != len(geometry):
        raise GeometryError(f'Gaussian count mismatch: {len(scene)} vs {len(geometry)}')
    gaussians = [g.replace(mean=p.mean, rotation=p.rotation, log_scales=p.log_scales,
                           density_logit=p.density_logit)
                 for g, p in zip(scene.gaussians, geometry.gaussians)]
    return scene.replace(gaussians=gaussians)
