"""Pixel-colour gradients with respect to per-Gaussian colour and opacity.

Exact values (sorted order, background included):

    dC/dc_i     = T_i * alpha_i
    dC/dalpha_i = T_i * (c_i - B_i)

where T_i is the transmittance in front of hit i and B_i the blend of
everything strictly behind it (background last).

The stochastic estimator draws I with mass T_I * alpha_I and K behind I with
the same rule restricted to depth > z_I, then credits only I:
dC/dc_I += 1 and dC/dalpha_I += (c_I - c_K) / alpha_I, with c_K the
background when nothing is drawn behind I. The StochasticSplats estimator
instead spreads -c_I / (1 - alpha_k) onto every hit in front of I.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from Models.blending import NONE, FrontPicker, _ray_stream, pick_table
from Models.bvh import collect_hits, for_each_hit, table_from_hits
from Models.errors import GradientError
from Models.rng import Phase, RngStream, derive_key

log = logging.getLogger(__name__)

DEFAULT_M_B = 8
NEAR_SINGULAR_ALPHA = 0.99


@dataclass(frozen=True, eq=False)
class RayGrad:
    """Sparse per-ray gradient: entry k belongs to Gaussian ids[k]."""
    ids: np.ndarray
    dc: np.ndarray
    dalpha: np.ndarray
    near_singular: int = 0

    def __len__(self):
        return self.ids.shape[0]

    @classmethod
    def from_dense(cls, dc, dalpha, near_singular=0):
        touched = np.flatnonzero((dc != 0) | np.any(dalpha != 0, axis=-1))
        return cls(touched, dc[touched], dalpha[touched], near_singular)

    def dense(self, n):
        dc = np.zeros(n)
        dalpha = np.zeros((n, 3))
        dc[self.ids] = self.dc
        dalpha[self.ids] = self.dalpha
        return dc, dalpha


@dataclass(eq=False)
class GradBuffer:
    """Dense dL/dparam accumulators for every Gaussian of a scene."""
    mean: np.ndarray
    rotation: np.ndarray
    log_scales: np.ndarray
    density_logit: np.ndarray
    appearance: np.ndarray
    normal: np.ndarray

    GROUPS = ('mean', 'rotation', 'log_scales', 'density_logit', 'appearance', 'normal')

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros((n, 3)), np.zeros((n, 4)), np.zeros((n, 3)), np.zeros(n),
                   np.zeros((n, 3)), np.zeros((n, 3)))

    def __len__(self):
        return self.density_logit.shape[0]

    def zero(self):
        for name in self.GROUPS:
            getattr(self, name).fill(0.0)

    def add(self, other):
        for name in self.GROUPS:
            getattr(self, name).__iadd__(getattr(other, name))
        return self

    def scale(self, factor):
        for name in self.GROUPS:
            getattr(self, name).__imul__(factor)
        return self

    def check_finite(self):
        for name in self.GROUPS:
            values = getattr(self, name)
            bad = ~np.isfinite(values.reshape(len(self), -1)).all(axis=1)
            if bad.any():
                raise GradientError(f'non-finite {name} gradient', gaussian_id=int(np.flatnonzero(bad)[0]))

    def flat(self):
        return np.concatenate([getattr(self, name).reshape(len(self), -1) for name in self.GROUPS], axis=1)


@dataclass(frozen=True, eq=False)
class SampleRecord:
    """Indices drawn for the backward rounds: I, its opacity and depth, and K.

    Arrays have one entry per round (single ray) or shape (rays, rounds).
    `I_col` / `K_col` are HitTable columns when drawn from a packet.
    """
    I: np.ndarray
    alpha_I: np.ndarray
    depth_I: np.ndarray
    K: np.ndarray
    I_col: np.ndarray = None
    K_col: np.ndarray = None
    depth_K: np.ndarray = field(default=None)

    @property
    def n_rounds(self):
        return self.I.shape[-1]

    def check(self):
        no_i = self.I == NONE
        if np.any(no_i & (self.K != NONE)):
            raise ValueError('K drawn without I')
        if self.depth_K is not None:
            both = (self.K != NONE) & ~no_i
            if np.any(self.depth_K[both] <= self.depth_I[both]):
                raise ValueError('K is not behind I')


def _table_sorted(table, colors, background):
    """Exact dC/dc and dC/dalpha per HitTable cell."""
    ids = np.broadcast_to(table.ids, table.alpha.shape)
    order = np.lexsort((ids, table.depth), axis=-1)
    alpha = np.take_along_axis(np.where(table.valid, table.alpha, 0.0), order, axis=-1)
    colors = np.asarray(colors, dtype=np.float64)
    rgb = colors[np.take_along_axis(ids, order, axis=-1)] if table.n_columns else np.zeros(alpha.shape + (3,))
    n_rays, n_cols = alpha.shape
    front = np.ones((n_rays, n_cols))
    for c in range(1, n_cols):
        front[:, c] = front[:, c - 1] * (1.0 - alpha[:, c - 1])
    behind = np.empty((n_rays, n_cols, 3))
    acc = np.broadcast_to(np.asarray(background, dtype=np.float64), (n_rays, 3)).copy()
    for c in range(n_cols - 1, -1, -1):
        behind[:, c] = acc
        acc = alpha[:, c, None] * rgb[:, c] + (1.0 - alpha[:, c, None]) * acc
    dc_sorted = front * alpha
    dalpha_sorted = front[..., None] * (rgb - behind)
    dc = np.zeros_like(dc_sorted)
    dalpha = np.zeros_like(dalpha_sorted)
    np.put_along_axis(dc, order, dc_sorted, axis=-1)
    np.put_along_axis(dalpha, np.broadcast_to(order[..., None], dalpha.shape), dalpha_sorted, axis=1)
    valid = table.valid
    return np.where(valid, dc, 0.0), np.where(valid[..., None], dalpha, 0.0)


def analytic_grads(hits, colors, background=np.zeros(3)):
    """Exact gradients for a hit list, aligned with the input order."""
    hits = list(hits)
    table = table_from_hits(hits)
    dc, dalpha = _table_sorted(table, colors, background)
    return RayGrad(table.ids, dc[0], dalpha[0])


def analytic_grads_table(table, colors, background):
    return _table_sorted(table, colors, background)


def _record_from_pickers(pick_i, pick_k):
    return SampleRecord(pick_i.ids, pick_i.alpha, pick_i.depth, pick_k.ids,
                        pick_i.columns, pick_k.columns,
                        pick_k.depth)


def sample_indices(ray, scene, M_b, rng):
    """Draw (I, K) for M_b rounds on one ray without evaluating any colour."""
    base = _ray_stream(rng, M_b, Phase.BACKWARD_I)
    pick_i = FrontPicker(base.split(Phase.BACKWARD_I))
    for_each_hit(scene.bvh, scene, ray, pick_i)
    pick_k = FrontPicker(base.split(Phase.BACKWARD_K), min_depth=pick_i.depth)
    if np.any(pick_i.ids != NONE):
        for_each_hit(scene.bvh, scene, ray, pick_k)
    record = _record_from_pickers(pick_i, pick_k)
    return SampleRecord(record.I[0], record.alpha_I[0], record.depth_I[0], record.K[0],
                        depth_K=record.depth_K[0])


def sample_indices_table(table, rng):
    """Packet form of sample_indices; `rng` covers (rays x M_b)."""
    pick_i = pick_table(table, rng.split(Phase.BACKWARD_I))
    pick_k = pick_table(table, rng.split(Phase.BACKWARD_K), min_depth=pick_i.depth)
    return _record_from_pickers(pick_i, pick_k)


def _lane_rgb(ids, colors, background):
    """Colours of lane-selected Gaussians; background where NONE."""
    if callable(colors):
        rgb = np.asarray(colors(ids), dtype=np.float64)
    else:
        colors = np.asarray(colors, dtype=np.float64)
        rgb = colors[np.where(ids == NONE, 0, ids)] if len(colors) else np.zeros(ids.shape + (3,))
    return np.where((ids == NONE)[..., None], np.asarray(background, dtype=np.float64), rgb)


def stochastic_grad_samples(record, colors, background, n):
    """Per-round estimates, dense over `n` Gaussians: (M_b, n) and (M_b, n, 3)."""
    rounds = record.n_rounds
    dc = np.zeros((rounds, n))
    dalpha = np.zeros((rounds, n, 3))
    sel = np.flatnonzero(record.I != NONE)
    if sel.size:
        ids_i = record.I[sel]
        c_plus = _lane_rgb(ids_i, colors, background)
        c_minus = _lane_rgb(record.K[sel], colors, background)
        dc[sel, ids_i] = 1.0
        dalpha[sel, ids_i] = (c_plus - c_minus) / record.alpha_I[sel, None]
    return dc, dalpha


def stochastic_grads(ray, scene, M_b=DEFAULT_M_B, rng=0, records=None, colors=None, background=None):
    """Sparse unbiased estimate of (dC/dc, dC/dalpha) for one ray.

    With `records`, the stored (I, alpha_I, K) are replayed instead of
    resampled; records drawn from the same stream key give identical output.
    """
    if M_b < 1:
        raise ValueError(f'M_b must be >= 1, got {M_b}')
    if records is None:
        records = sample_indices(ray, scene, M_b, rng)
    colors = scene.colors if colors is None else colors
    background = scene.background if background is None else background
    n = len(scene)
    dc, dalpha = stochastic_grad_samples(records, colors, background, n)
    dc = dc.mean(axis=0)
    dalpha = dalpha.mean(axis=0)
    if not (np.all(np.isfinite(dc)) and np.all(np.isfinite(dalpha))):
        bad = np.flatnonzero(~np.isfinite(dalpha).all(axis=1))
        raise GradientError('non-finite stochastic gradient',
                            gaussian_id=int(bad[0]) if bad.size else None)
    return RayGrad.from_dense(dc, dalpha)


def ssplats_grad_samples(hits, colors, background, n, rng):
    """Per-round StochasticSplats estimates over a materialised hit list.

    Returns dense (M, n), (M, n, 3) and the number of near-singular terms
    (hits with alpha > 0.99 in front of the pick).
    """
    rng = _ray_stream(rng, 1, Phase.BACKWARD_I)
    rounds = rng.shape[1]
    dc = np.zeros((rounds, n))
    dalpha = np.zeros((rounds, n, 3))
    if not hits:
        return dc, dalpha, 0
    table = table_from_hits(hits)
    picker = pick_table(table, rng.split(Phase.BACKWARD_I))
    ids = picker.ids[0]
    depth_i = picker.depth[0]
    alpha_i = picker.alpha[0]
    f = _lane_rgb(ids, colors, background)
    alphas = table.alpha[0]
    in_front = table.depth[0][None, :] < depth_i[:, None]
    spread = -f[:, None, :] / (1.0 - alphas)[None, :, None] * in_front[..., None]
    dalpha[:, table.ids] += spread
    sel = np.flatnonzero(ids != NONE)
    dc[sel, ids[sel]] = 1.0
    dalpha[sel, ids[sel]] += f[sel] / alpha_i[sel, None]
    near_singular = int(np.sum(in_front & (alphas[None, :] > NEAR_SINGULAR_ALPHA)))
    return dc, dalpha, near_singular


def ssplats_grads(ray, scene, M_b=DEFAULT_M_B, rng=0, colors=None, background=None):
    """StochasticSplats estimate; unbiased but divides by (1 - alpha_k)."""
    if M_b < 1:
        raise ValueError(f'M_b must be >= 1, got {M_b}')
    rng = _ray_stream(rng, M_b, Phase.BACKWARD_I)
    hits = collect_hits(scene.bvh, scene, ray)
    colors = scene.colors if colors is None else colors
    background = scene.background if background is None else background
    dc, dalpha, near = ssplats_grad_samples(hits, colors, background, len(scene), rng)
    if near:
        log.debug('ssplats: %d near-singular 1/(1 - alpha) terms', near)
    return RayGrad.from_dense(dc.mean(axis=0), dalpha.mean(axis=0), near)


def table_alpha_grads(record, c_plus, c_minus, upstream, n_columns):
    """dL/dalpha per HitTable cell and dL/dc per lane from replayed records.

    c_plus / c_minus are (rays, rounds, 3) colours of I and K (background
    where K is NONE); upstream is dL/dC per ray.
    """
    n_rays, rounds = record.I.shape
    sel = record.I != NONE
    dl_dc = np.where(sel[..., None], upstream[:, None, :], 0.0) / rounds
    diff = np.einsum('rmc,rc->rm', c_plus - c_minus, upstream)
    lane_alpha = np.where(sel, diff / record.alpha_I, 0.0) / rounds
    dl_dalpha = np.zeros((n_rays, n_columns))
    rows, lanes = np.nonzero(sel)
    np.add.at(dl_dalpha, (rows, record.I_col[rows, lanes]), lane_alpha[rows, lanes])
    return dl_dalpha, dl_dc


VARIANCE_COLUMNS = ['scene_id', 'param', 'analytic', 'empirical_mean', 'stderr', 'ratio']
_CHUNK_ROUNDS = 4096


def _group_moments(sample_fn, trials, M_b):
    """Sum and sum of squares of M_b-round estimates over `trials` rounds."""
    n_groups = trials // M_b
    total = total_sq = None
    done = 0
    chunk = max(M_b, (_CHUNK_ROUNDS // M_b) * M_b)
    while done < n_groups * M_b:
        rounds = min(chunk, n_groups * M_b - done)
        dc, dalpha = sample_fn(done, rounds)
        est = np.concatenate([dc[..., None], dalpha], axis=-1)
        est = est.reshape(rounds // M_b, M_b, *est.shape[1:]).mean(axis=1)
        s, s2 = est.sum(axis=0), (est * est).sum(axis=0)
        total = s if total is None else total + s
        total_sq = s2 if total_sq is None else total_sq + s2
        done += rounds
    mean = total / n_groups
    var = np.maximum(total_sq / n_groups - mean * mean, 0.0) * n_groups / max(n_groups - 1, 1)
    return mean, var, n_groups


def variance_study(ray, scene, M_b=DEFAULT_M_B, trials=100_000, seed=0, scene_id=0):
    """Per-component mean, standard error and variance of both estimators.

    Returns (frame, ratio): one row per (estimator, Gaussian, component) with
    `ratio` = Var[ssplats] / Var[ours] for that component, and the ratio of
    summed opacity-gradient variances over the whole ray.
    """
    hits = collect_hits(scene.bvh, scene, ray)
    ids = np.array(sorted(h.id for h in hits), dtype=np.int64)
    n = len(scene)
    exact = analytic_grads(hits, scene.colors, scene.background)
    exact_dc, exact_dalpha = exact.dense(n)
    exact_all = np.concatenate([exact_dc[:, None], exact_dalpha], axis=1)

    def ours(offset, rounds):
        rng = RngStream(seed, 0, Phase.BACKWARD_I, n_samples=rounds, sample_offset=offset)
        record = sample_indices(ray, scene, rounds, rng)
        return stochastic_grad_samples(record, scene.colors, scene.background, n)

    def ssplats(offset, rounds):
        rng = RngStream(derive_key(seed, 1), 0, Phase.BACKWARD_I, n_samples=rounds,
                        sample_offset=offset)
        dc, dalpha, _ = ssplats_grad_samples(hits, scene.colors, scene.background, n, rng)
        return dc, dalpha

    ours_mean, ours_var, groups = _group_moments(ours, trials, M_b)
    ss_mean, ss_var, _ = _group_moments(ssplats, trials, M_b)
    names = ['dc'] + [f'dalpha.{ch}' for ch in 'rgb']
    rows = []
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = ss_var / ours_var
    for label, mean, var in (('ours', ours_mean, ours_var), ('ssplats', ss_mean, ss_var)):
        for gid in ids:
            for k, name in enumerate(names):
                rows.append([scene_id, f'{label}/gaussians[{gid}].{name}', exact_all[gid, k],
                             mean[gid, k], np.sqrt(var[gid, k] / groups), ratio[gid, k]])
    frame = pd.DataFrame(rows, columns=VARIANCE_COLUMNS)
    ours_total = float(ours_var[ids, 1:].sum()) if ids.size else 0.0
    ss_total = float(ss_var[ids, 1:].sum()) if ids.size else 0.0
    total_ratio = ss_total / ours_total if ours_total > 0 else np.nan
    return frame, total_ratio


def gaussian_variance_ratio(frame, gid):
    """Var[ssplats] / Var[ours] of one Gaussian's opacity gradient, summed over
    channels, from a single-scene variance_study frame."""
    var = frame.set_index('param')['stderr'] ** 2
    keys = [f'gaussians[{gid}].dalpha.{ch}' for ch in 'rgb']
    ours = sum(var[f'ours/{k}'] for k in keys)
    ssplats = sum(var[f'ssplats/{k}'] for k in keys)
    return float(ssplats / ours) if ours > 0 else np.nan
