"""Pinhole and equidistant-fisheye cameras.

Camera frame follows the usual computer-vision convention: +x right, +y down,
+z along the optical axis. `pose` is the 3x4 camera-to-world transform [R | t].
Pixel (i, j) is column i, row j; a jitter of (0.5, 0.5) is the pixel center.
"""
from dataclasses import dataclass

import numpy as np

from Models.errors import GeometryError
from Models.gaussian import Ray, normalize


def _pose(pose):
    p = np.asarray(pose, dtype=np.float64).reshape(3, 4)
    if not np.all(np.isfinite(p)):
        raise GeometryError('camera pose must be finite')
    r = p[:, :3]
    if np.max(np.abs(r @ r.T - np.eye(3))) > 1e-6:
        raise GeometryError('camera pose rotation is not orthonormal')
    return p


def look_at(eye, target, up=(0.0, -1.0, 0.0)):
    """Camera-to-world pose looking from `eye` towards `target`."""
    eye = np.asarray(eye, dtype=np.float64)
    z = normalize(np.asarray(target, dtype=np.float64) - eye)
    x = normalize(np.cross(up, z))
    y = np.cross(z, x)
    return np.concatenate([np.stack([x, y, z], axis=1), eye[:, None]], axis=1)


@dataclass(frozen=True, eq=False)
class RayBatch:
    """Structure-of-arrays ray packet."""
    origins: np.ndarray
    dirs: np.ndarray
    t_min: np.ndarray
    t_max: np.ndarray
    valid: np.ndarray
    pixels: np.ndarray

    def __len__(self):
        return self.origins.shape[0]

    @classmethod
    def from_rays(cls, rays, pixels=None):
        rays = list(rays)
        if pixels is None:
            pixels = np.arange(len(rays))
        return cls(
            origins=np.array([r.origin for r in rays]).reshape(-1, 3),
            dirs=np.array([r.dir for r in rays]).reshape(-1, 3),
            t_min=np.array([r.t_min for r in rays], dtype=np.float64),
            t_max=np.array([r.t_max for r in rays], dtype=np.float64),
            valid=np.array([r.valid for r in rays], dtype=bool),
            pixels=np.asarray(pixels, dtype=np.int64),
        )

    def subset(self, index):
        return RayBatch(self.origins[index], self.dirs[index], self.t_min[index],
                        self.t_max[index], self.valid[index], self.pixels[index])

    def ray(self, k):
        return Ray(self.origins[k], self.dirs[k], float(self.t_min[k]),
                   float(self.t_max[k]), valid=bool(self.valid[k]))


@dataclass(frozen=True, eq=False)
class _Camera:
    pose: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        object.__setattr__(self, 'pose', _pose(self.pose))
        if int(self.width) <= 0 or int(self.height) <= 0:
            raise GeometryError(f'camera size must be positive, got {self.width}x{self.height}')
        object.__setattr__(self, 'width', int(self.width))
        object.__setattr__(self, 'height', int(self.height))

    @property
    def rotation(self):
        return self.pose[:, :3]

    @property
    def position(self):
        return self.pose[:, 3]

    @property
    def optical_axis(self):
        return self.pose[:, 2]

    def _offsets(self, i, j, jitter):
        u, v = jitter
        return (np.asarray(i, dtype=np.float64) + u - 0.5 * self.width,
                np.asarray(j, dtype=np.float64) + v - 0.5 * self.height)

    def local_dirs(self, dx, dy):
        raise NotImplementedError

    def generate_rays(self, jitter=(0.5, 0.5)):
        """Rays for every pixel, row-major (pixel id = j * width + i)."""
        jj, ii = np.mgrid[0:self.height, 0:self.width]
        dx, dy = self._offsets(ii.reshape(-1), jj.reshape(-1), jitter)
        local, valid = self.local_dirs(dx, dy)
        dirs = normalize(local @ self.rotation.T)
        n = dirs.shape[0]
        return RayBatch(
            origins=np.broadcast_to(self.position, (n, 3)).copy(),
            dirs=dirs,
            t_min=np.zeros(n),
            t_max=np.full(n, np.inf),
            valid=valid,
            pixels=np.arange(n, dtype=np.int64),
        )


@dataclass(frozen=True, eq=False)
class PinholeCamera(_Camera):
    fov_y: float = np.pi / 3

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 < self.fov_y < np.pi:
            raise GeometryError(f'pinhole fov_y must lie in (0, pi), got {self.fov_y}')

    @property
    def focal(self):
        return 0.5 * self.height / np.tan(0.5 * self.fov_y)

    def local_dirs(self, dx, dy):
        local = np.stack([dx / self.focal, dy / self.focal, np.ones_like(dx)], axis=-1)
        return local, np.ones(local.shape[:-1], dtype=bool)


@dataclass(frozen=True, eq=False)
class FisheyeCamera(_Camera):
    """Equidistant fisheye: theta = r_norm * fov / 2 inside the image circle."""
    fov: float = np.pi

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 < self.fov <= np.pi:
            raise GeometryError(f'fisheye fov must lie in (0, pi], got {self.fov}')

    @property
    def circle_radius(self):
        return 0.5 * min(self.width, self.height)

    def local_dirs(self, dx, dy):
        r_norm = np.hypot(dx, dy) / self.circle_radius
        valid = r_norm <= 1.0
        theta = np.minimum(r_norm, 1.0) * 0.5 * self.fov
        phi = np.arctan2(dy, dx)
        local = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi),
                          np.cos(theta)], axis=-1)
        return local, valid


Camera = (PinholeCamera, FisheyeCamera)


def generate_ray(cam, px, jitter=(0.5, 0.5)):
    """Single camera ray. Fisheye pixels outside the image circle give an
    invalid ray (it contributes background only)."""
    i, j = px
    if not (0 <= i < cam.width and 0 <= j < cam.height):
        raise GeometryError(f'pixel {px} outside {cam.width}x{cam.height} image')
    dx, dy = cam._offsets(i, j, jitter)
    local, valid = cam.local_dirs(np.atleast_1d(dx), np.atleast_1d(dy))
    d = cam.rotation @ local[0]
    return Ray(cam.position, d / np.linalg.norm(d), valid=bool(valid[0]))
