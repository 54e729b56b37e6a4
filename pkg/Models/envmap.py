"""Equirectangular environment maps.

Direction (x, y, z) maps to theta = acos(z) in [0, pi] (rows, top = +z) and
phi = atan2(y, x) in [-pi, pi) (columns, u = (phi + pi) / 2 pi).

File layout: 16-byte header (b"ENVF", u32 width, u32 height, u32 channels=3)
followed by row-major little-endian float32 radiance.
"""
import logging
import struct

import numpy as np

from Models.errors import SceneError

log = logging.getLogger(__name__)

MAGIC = b'ENVF'
HEADER = struct.Struct('<4sIII')


def check_radiance(grid, path=''):
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 3 or grid.shape[2] != 3 or grid.shape[0] < 1 or grid.shape[1] < 1:
        raise SceneError(path, f'envmap must be (height, width, 3), got {grid.shape}')
    if not np.all(np.isfinite(grid)) or np.any(grid < 0):
        raise SceneError(path, 'envmap radiance must be finite and non-negative')
    return grid


def constant_envmap(rgb, width=1, height=1):
    return np.broadcast_to(np.asarray(rgb, dtype=np.float64), (height, width, 3)).copy()


def read_envmap(path):
    with open(path, 'rb') as f:
        head = f.read(HEADER.size)
        if len(head) != HEADER.size:
            raise SceneError(str(path), 'truncated envmap header')
        magic, width, height, channels = HEADER.unpack(head)
        if magic != MAGIC:
            raise SceneError(str(path), f'bad envmap magic {magic!r}')
        if channels != 3:
            raise SceneError(str(path), f'envmap must have 3 channels, got {channels}')
        body = np.frombuffer(f.read(), dtype='<f4')
    if body.size != width * height * 3:
        raise SceneError(str(path), f'expected {width * height * 3} floats, got {body.size}')
    return check_radiance(body.reshape(height, width, 3), str(path))


def write_envmap(path, grid):
    grid = check_radiance(grid, str(path))
    height, width, _ = grid.shape
    with open(path, 'wb') as f:
        f.write(HEADER.pack(MAGIC, width, height, 3))
        f.write(grid.astype('<f4').tobytes())


def direction_to_uv(dirs):
    dirs = np.atleast_2d(dirs)
    theta = np.arccos(np.clip(dirs[:, 2], -1.0, 1.0))
    phi = np.arctan2(dirs[:, 1], dirs[:, 0])
    return (phi + np.pi) / (2.0 * np.pi), theta / np.pi


def envmap_lookup(grid, dirs):
    """Bilinear radiance lookup: wraps in azimuth, clamps in polar angle."""
    height, width, _ = grid.shape
    u, v = direction_to_uv(dirs)
    x = u * width - 0.5
    y = np.clip(v * height - 0.5, 0.0, height - 1)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    x1 = (x0 + 1) % width
    x0 = x0 % width
    y1 = np.minimum(y0 + 1, height - 1)
    top = (1.0 - fx) * grid[y0, x0] + fx * grid[y0, x1]
    bottom = (1.0 - fx) * grid[y1, x0] + fx * grid[y1, x1]
    return (1.0 - fy) * top + fy * bottom


def uniform_sphere(xi1, xi2):
    """Uniform directions on the unit sphere from two uniforms (pdf 1 / 4 pi)."""
    z = 1.0 - 2.0 * xi1
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = 2.0 * np.pi * xi2
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)
