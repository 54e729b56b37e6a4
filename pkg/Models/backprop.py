"""Opacity derivatives with respect to Gaussian parameters.

alpha = sigma * exp(-E),  E = q^T P q,  q = o + t* d - mu,
t* = d^T P (mu - o) / (d^T P d) clamped to the ray range.

Derivatives are totals: they include the motion of t* with the parameters
(zero where t* is clamped). With G = dE/dP,

    dE/dmu     = -2 P q + (dE/dt) P d / (d^T P d)
    dE/dP      = q q^T + (dE/dt) (d u^T - t* d d^T) / (d^T P d),  u = mu - o
    dE/ds_k    = -2 exp(-2 s_k) (R^T G R)_kk
    dE/dR      = (G + G^T) R D

Quaternion gradients are projected onto the tangent of the unit sphere since
Gaussians store normalised rotations.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from Models.errors import GradientError
from Models.gaussian import ALPHA_MAX, rotation_matrix, rotation_matrix_grads

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class OpacityGrads:
    """d alpha / d param for R rays against one Gaussian."""
    alpha: np.ndarray
    mean: np.ndarray
    rotation: np.ndarray
    log_scales: np.ndarray
    density_logit: np.ndarray


def _opacity_param_grads(origins, dirs, t_min, t_max, mean, quat, log_scales, logit):
    rot = rotation_matrix(quat)
    inv_var = np.exp(-2.0 * log_scales)
    prec = rot @ np.diag(inv_var) @ rot.T

    u = mean - origins
    pd = dirs @ prec
    b = np.einsum('ri,ri->r', pd, dirs)
    t_raw = np.einsum('ri,ri->r', pd, u) / b
    t = np.clip(t_raw, t_min, t_max)
    free = (t_raw >= t_min) & (t_raw <= t_max)

    q = origins + t[:, None] * dirs - mean
    pq = q @ prec
    energy = np.einsum('ri,ri->r', q, pq)
    sigma = expit(logit)
    alpha_raw = sigma * np.exp(-energy)
    alpha = np.minimum(alpha_raw, ALPHA_MAX)
    live = alpha_raw <= ALPHA_MAX

    de_dt = np.where(free, 2.0 * np.einsum('ri,ri->r', pd, q), 0.0)
    w = de_dt / b
    de_dmean = -2.0 * pq + w[:, None] * pd
    de_dprec = (np.einsum('ri,rj->rij', q, q)
                + w[:, None, None] * (np.einsum('ri,rj->rij', dirs, u)
                                      - t[:, None, None] * np.einsum('ri,rj->rij', dirs, dirs)))

    m = np.einsum('ik,rij,jl->rkl', rot, de_dprec, rot)
    de_dscales = -2.0 * inv_var * np.einsum('rkk->rk', m)
    de_drot = np.einsum('rij,jk->rik', de_dprec + np.swapaxes(de_dprec, 1, 2), rot * inv_var)
    de_dquat = np.einsum('rij,cij->rc', de_drot, rotation_matrix_grads(quat))
    de_dquat -= np.outer(de_dquat @ quat, quat)

    scale = np.where(live, -alpha, 0.0)
    return OpacityGrads(
        alpha=alpha,
        mean=scale[:, None] * de_dmean,
        rotation=scale[:, None] * de_dquat,
        log_scales=scale[:, None] * de_dscales,
        density_logit=np.where(live, alpha * (1.0 - sigma), 0.0),
    )


def opacity_param_grads(g, rays):
    """Vectorised d alpha / d(mean, rotation, log_scales, density_logit).

    `rays` is a RayBatch; rows outside the Gaussian's support simply get
    tiny or zero gradients.
    """
    return _opacity_param_grads(rays.origins, rays.dirs, rays.t_min, rays.t_max,
                                g.mean, g.rotation, g.log_scales, g.density_logit)


def opacity_param_grads_scene(scene, gid, rays):
    return _opacity_param_grads(rays.origins, rays.dirs, rays.t_min, rays.t_max,
                                scene.means[gid], scene.quats[gid], scene.log_scales[gid],
                                scene.density_logits[gid])


def _accumulate(out, gid, grads, dl_dalpha):
    out.mean[gid] += dl_dalpha @ grads.mean
    out.rotation[gid] += dl_dalpha @ grads.rotation
    out.log_scales[gid] += dl_dalpha @ grads.log_scales
    out.density_logit[gid] += dl_dalpha @ grads.density_logit


def backprop_to_params(g, ray, dC_dalpha, upstream, out, gid, dC_dc=None):
    """Chain dL/dalpha = upstream . dC/dalpha into `out` for Gaussian `gid`.

    With `dC_dc` (scalar weight, emissive Gaussians) the colour gradient
    upstream * dC/dc is added to the appearance group too.
    """
    dC_dalpha = np.asarray(dC_dalpha, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if not (np.all(np.isfinite(dC_dalpha)) and np.all(np.isfinite(upstream))):
        raise GradientError('non-finite dC/dalpha', gaussian_id=gid)
    dl_dalpha = float(upstream @ dC_dalpha)
    t_min = np.array([ray.t_min])
    t_max = np.array([ray.t_max])
    grads = _opacity_param_grads(ray.origin[None], ray.dir[None], t_min, t_max,
                                 g.mean, g.rotation, g.log_scales, g.density_logit)
    _accumulate(out, gid, grads, np.array([dl_dalpha]))
    if dC_dc is not None:
        out.appearance[gid] += upstream * float(dC_dc)
    for name in ('mean', 'rotation', 'log_scales'):
        if not np.all(np.isfinite(getattr(out, name)[gid])):
            raise GradientError(f'non-finite {name} gradient', gaussian_id=gid)


def backprop_table(scene, rays, table, dl_dalpha, out):
    """Accumulate per-cell dL/dalpha of a HitTable into `out`.

    Columns are processed in table order, so the summation order is fixed
    for a given packet.
    """
    for c in range(table.n_columns):
        rows = np.flatnonzero(table.valid[:, c] & (dl_dalpha[:, c] != 0.0))
        if rows.size == 0:
            continue
        gid = int(table.ids[c])
        grads = opacity_param_grads_scene(scene, gid, rays.subset(rows))
        _accumulate(out, gid, grads, dl_dalpha[rows, c])
    return out
