import logging
from dataclasses import replace

import numpy as np

from Models.blending import DEFAULT_M_F, pick_table, sorted_blend_table
from Models.bvh import trace_packet
from Models.image_io import Image
from Models.parallel import tile_map, tiles
from Models.relight import pick_colors
from Models.rng import Phase, RngStream

log = logging.getLogger(__name__)

RENDER_MODES = ('sorted', 'stochastic')
DEFAULT_RELIGHT_M_F = 15


def render_rays(scene, rays, mode='sorted', M_f=DEFAULT_M_F, seed=0, lights=None, env_samples=1):
    """Colours (rays x 3) of a ray packet.

    Sorted mode is the exact blend of emissive colours; stochastic mode
    averages M_f picks per pixel and shades reflective picks.
    """
    table = trace_packet(scene.bvh, scene, rays)
    if mode == 'sorted':
        if scene.is_relightable:
            raise ValueError('scenes with reflective Gaussians render in stochastic mode')
        color, _ = sorted_blend_table(table, scene.colors, scene.background)
        return color
    if mode != 'stochastic':
        raise ValueError(f'unknown render mode {mode!r}, expected one of {RENDER_MODES}')
    if M_f < 1:
        raise ValueError(f'M_f must be >= 1, got {M_f}')
    picker = pick_table(table, RngStream(seed, rays.pixels, Phase.FORWARD, n_samples=M_f))
    colors = pick_colors(scene, rays, picker.ids, picker.depth, seed, Phase.SHADE, lights,
                         env_samples)
    return colors.mean(axis=1)


def render_image(scene, camera, mode='sorted', M_f=DEFAULT_M_F, seed=0, threads=1,
                 lights=None, env_samples=1, pixel_offset=0):
    """Render one camera. `pixel_offset` shifts the RNG pixel keys (training
    uses view_index * width * height so views draw independently)."""
    rays = camera.generate_rays()
    if pixel_offset:
        rays = replace(rays, pixels=rays.pixels + pixel_offset)

    def run(index):
        return render_rays(scene, rays.subset(index), mode, M_f, seed, lights, env_samples)

    parts = tile_map(run, tiles(len(rays)), threads)
    color = np.concatenate(parts) if parts else np.zeros((0, 3))
    log.debug('rendered %dx%d (%s, M_f=%d)', camera.width, camera.height, mode, M_f)
    return Image.from_pixels(color, camera.width, camera.height)


def relight_image(scene, camera, M_f=DEFAULT_RELIGHT_M_F, seed=0, lights=None, env_samples=1,
                  threads=1):
    """Stochastic render under `lights` (the scene's own lights by default)."""
    return render_image(scene, camera, 'stochastic', M_f, seed, threads, lights, env_samples)
