"""Pixel colour: the sorted alpha-blending oracle and the stochastic estimators.

Stochastic selection keeps, per independent sample, the closest Gaussian
among those that pass a Bernoulli(alpha) test. Gaussians may be visited in
any order; the selected index I then has mass alpha_I * prod_{j in front}(1 - alpha_j)
and the colour estimate is simply c_I (background when nothing was selected).
"""
import logging
from dataclasses import dataclass

import numpy as np

from Models.bvh import Hit, for_each_hit, table_from_hits  # noqa: F401  (Hit re-exported)
from Models.rng import Phase, RngStream

log = logging.getLogger(__name__)

NONE = -1
SHADOW_EPS = 1e-4
DEFAULT_M_F = 30


@dataclass(frozen=True, eq=False)
class Pick:
    """Selected Gaussian per sample lane; id NONE <=> depth inf (alpha 1)."""
    id: object
    depth: object
    alpha: object

    @property
    def selected(self):
        return np.asarray(self.id) != NONE


class FrontPicker:
    """Running selection (I, z, alpha) vectorised over rays x sample lanes.

    Feed it hits in traversal order, either one `Hit` at a time (single ray)
    or one HitTable column at a time (packet). Each visit draws one uniform
    per lane keyed by the Gaussian id, so a ray picks the same Gaussians
    whichever path or packet it is traced in. With `min_depth` only hits
    strictly behind it are eligible, which samples K behind a previously
    drawn I.
    """

    def __init__(self, rng, min_depth=None):
        self.rng = rng
        shape = rng.shape
        self.ids = np.full(shape, NONE, dtype=np.int64)
        self.depth = np.full(shape, np.inf)
        self.alpha = np.ones(shape)
        self.columns = np.full(shape, NONE, dtype=np.int64)
        if min_depth is None:
            self.min_depth = np.full(shape, -np.inf)
        else:
            self.min_depth = np.broadcast_to(np.asarray(min_depth, dtype=np.float64), shape)

    def visit(self, gid, alpha, depth, valid=None):
        gid = np.asarray(gid, dtype=np.int64).reshape(-1, 1)
        xi = self.rng.draw(gid)
        a = np.asarray(alpha, dtype=np.float64).reshape(-1, 1)
        z = np.asarray(depth, dtype=np.float64).reshape(-1, 1)
        take = (xi < a) & (z < self.depth) & (z > self.min_depth)
        if valid is not None:
            take &= np.asarray(valid, dtype=bool).reshape(-1, 1)
        self.ids = np.where(take, gid, self.ids)
        self.depth = np.where(take, z, self.depth)
        self.alpha = np.where(take, a, self.alpha)
        return take

    def __call__(self, hit):
        self.visit(hit.id, hit.alpha, hit.depth)

    def feed_table(self, table, exclude=None):
        for c in range(table.n_columns):
            valid = table.valid[:, c]
            if exclude is not None:
                valid = valid & (exclude != table.ids[c])
            take = self.visit(table.ids[c], table.alpha[:, c], table.depth[:, c], valid)
            self.columns = np.where(take, c, self.columns)
        return self

    def pick(self):
        """Pick for a single ray: scalars for one lane, arrays per lane otherwise."""
        ids, depth, alpha = self.ids[0], self.depth[0], self.alpha[0]
        if ids.size == 1:
            return Pick(int(ids[0]), float(depth[0]), float(alpha[0]))
        return Pick(ids, depth, alpha)


def _ray_stream(rng, n_samples=1, phase=Phase.FORWARD):
    if isinstance(rng, RngStream):
        return rng
    return RngStream(rng, 0, phase, n_samples=n_samples)


def pick_front(ray, scene, rng, min_depth=0.0, exclude=None):
    """Draw I (or K behind `min_depth` when it is positive) for one ray.

    `rng` is an RngStream over one pixel; its sample lanes are independent
    trials that share this single traversal.
    """
    picker = FrontPicker(rng, min_depth if np.any(np.asarray(min_depth) > 0) else None)
    if exclude is None:
        for_each_hit(scene.bvh, scene, ray, picker)
    else:
        for_each_hit(scene.bvh, scene, ray,
                     lambda hit: picker.visit(hit.id, hit.alpha, hit.depth, hit.id != exclude))
    return picker.pick()


def sorted_blend_table(table, colors, background):
    """Exact front-to-back blend per row; ties in depth broken by id."""
    ids = np.broadcast_to(table.ids, table.alpha.shape)
    order = np.lexsort((ids, table.depth), axis=-1)
    alpha = np.take_along_axis(np.where(table.valid, table.alpha, 0.0), order, axis=-1)
    sorted_ids = np.take_along_axis(ids, order, axis=-1)
    n_rays = table.n_rays
    color = np.zeros((n_rays, 3))
    trans = np.ones(n_rays)
    colors = np.asarray(colors, dtype=np.float64)
    for c in range(table.n_columns):
        a = alpha[:, c]
        color += (trans * a)[:, None] * colors[sorted_ids[:, c]]
        trans = trans * (1.0 - a)
    color += trans[:, None] * np.asarray(background, dtype=np.float64)
    return color, trans


def sorted_blend(hits, colors, background=np.zeros(3)):
    """Reference alpha blend of an unsorted hit list: (C, T_ray)."""
    color, trans = sorted_blend_table(table_from_hits(list(hits)), colors, background)
    return color[0], float(trans[0])


def _lane_colors(picks_ids, colors, background):
    colors = np.asarray(colors, dtype=np.float64)
    safe = np.where(picks_ids == NONE, 0, picks_ids)
    rgb = colors[safe] if len(colors) else np.zeros(picks_ids.shape + (3,))
    return np.where((picks_ids == NONE)[..., None], np.asarray(background, dtype=np.float64), rgb)


def stochastic_color(ray, scene, M_f=DEFAULT_M_F, rng=0, colors=None, background=None):
    """Average of M_f single-Gaussian colour samples drawn in one traversal.

    `colors` is a per-Gaussian (N, 3) array, or a callable mapping a Pick
    (lane arrays) to (M_f, 3) colours for shaded appearance.
    """
    if M_f < 1:
        raise ValueError(f'M_f must be >= 1, got {M_f}')
    rng = _ray_stream(rng, M_f)
    background = scene.background if background is None else background
    picker = FrontPicker(rng)
    for_each_hit(scene.bvh, scene, ray, picker)
    ids = picker.ids[0]
    if callable(colors):
        rgb = colors(Pick(ids, picker.depth[0], picker.alpha[0]))
        rgb = np.where((ids == NONE)[:, None], background, rgb)
    else:
        rgb = _lane_colors(ids, scene.colors if colors is None else colors, background)
    return rgb.mean(axis=0)


def transmittance_estimate(shadow_ray, scene, rng=0, exclude=None):
    """1 if no Gaussian is selected along the shadow ray, else 0.

    With several sample lanes, one binary estimate per lane.
    """
    rng = _ray_stream(rng, 1, Phase.SHADOW)
    pick = pick_front(shadow_ray, scene, rng, 0.0, exclude)
    est = (np.asarray(pick.id) == NONE).astype(np.float64)
    return int(est) if est.ndim == 0 else est


def pick_table(table, rng, min_depth=None, exclude=None):
    """FrontPicker run over every column of a packet HitTable."""
    return FrontPicker(rng, min_depth).feed_table(table, exclude)


def stochastic_color_table(table, colors, background, rng):
    picker = pick_table(table, rng)
    return _lane_colors(picker.ids, colors, background).mean(axis=1), picker


def transmittance_table(table, rng, exclude=None):
    """Binary transmittance estimates (R, lanes) for a packet of shadow rays."""
    picker = pick_table(table, rng, exclude=exclude)
    return (picker.ids == NONE).astype(np.float64)
