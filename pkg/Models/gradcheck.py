import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from Models.backprop import opacity_param_grads
from Models.blending import sorted_blend
from Models.bvh import Hit, brute_force_hits
from Models.camera import RayBatch
from Models.gaussian import Emissive, Ray, max_response_batch, normalize, opacity_batch
from Models.gradients import analytic_grads

log = logging.getLogger(__name__)

REPORT_COLUMNS = ['scene_id', 'param', 'analytic', 'empirical_mean', 'stderr', 'ratio']
GRADCHECK_COLUMNS = REPORT_COLUMNS + ['rel_err']
REL_ERR_FLOOR = 1e-4
RAY_OFFSET = 0.5
CHANNELS = 'rgb'


@dataclass(frozen=True, eq=False)
class GradcheckReport:
    frame: pd.DataFrame

    @property
    def max_rel_err(self):
        return float(self.frame['rel_err'].max()) if len(self.frame) else 0.0

    def passed(self, tol=1e-4):
        return self.max_rel_err <= tol


def relative_error(analytic, numeric, floor=REL_ERR_FLOOR):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _blend_ids(scene, ray, ids):
    """Sorted blend of a fixed set of Gaussians (no alpha_min cut)."""
    hits = []
    for gid in ids:
        t, _ = max_response_batch(ray.origin[None], ray.dir[None], ray.t_min, ray.t_max,
                                  scene.means[gid], scene.precisions[gid])
        a = opacity_batch(ray.origin[None], ray.dir[None], t, scene.means[gid],
                          scene.precisions[gid], scene.densities[gid])
        hits.append(Hit(int(gid), float(a[0]), float(t[0])))
    return sorted_blend(hits, scene.colors, scene.background)[0]


def _perturbed(scene, gid, group, k, delta):
    g = scene.gaussians[gid]
    if group == 'density_logit':
        g = g.replace(density_logit=g.density_logit + delta)
    elif group == 'rgb':
        rgb = g.appearance.rgb.copy()
        rgb[k] += delta
        g = g.replace(appearance=Emissive(np.maximum(rgb, 0.0)))
    else:
        values = getattr(g, group).copy()
        values[k] += delta
        if group == 'rotation':
            values /= np.linalg.norm(values)
        g = g.replace(**{group: values})
    gaussians = list(scene.gaussians)
    gaussians[gid] = g
    return scene.replace(gaussians=gaussians)


def fd_gradcheck(scene, ray, step=1e-5, scene_id=0):
    """Analytic chain (exact blend gradients then opacity backprop) against
    central differences of the sorted blend, per parameter and channel."""
    if not 1e-7 <= step <= 1e-3:
        raise ValueError(f'step must lie in [1e-7, 1e-3], got {step}')
    hits = brute_force_hits(scene, ray)
    if np.any(scene.reflective[[h.id for h in hits]]):
        raise ValueError('gradcheck needs emissive Gaussians along the ray')
    grads = analytic_grads(hits, scene.colors, scene.background)
    ids = [h.id for h in hits]
    batch = RayBatch.from_rays([ray])
    rows = []
    for k, gid in enumerate(ids):
        g = scene.gaussians[gid]
        og = opacity_param_grads(g, batch)
        dc_dalpha = grads.dalpha[k]
        groups = [('mean', og.mean[0]), ('rotation', og.rotation[0]),
                  ('log_scales', og.log_scales[0]), ('density_logit', og.density_logit[:1]),
                  ('rgb', None)]
        for group, dalpha_dparam in groups:
            size = 3 if dalpha_dparam is None else dalpha_dparam.shape[0]
            for p in range(size):
                plus = _blend_ids(_perturbed(scene, gid, group, p, step), ray, ids)
                minus = _blend_ids(_perturbed(scene, gid, group, p, -step), ray, ids)
                numeric = (plus - minus) / (2.0 * step)
                for ch in range(3):
                    if group == 'rgb':
                        analytic = grads.dc[k] if ch == p else 0.0
                    else:
                        analytic = dc_dalpha[ch] * dalpha_dparam[p]
                    suffix = '' if group == 'density_logit' else f'[{p}]'
                    rows.append([scene_id, f'gaussians[{gid}].{group}{suffix}/{CHANNELS[ch]}',
                                 analytic, numeric[ch], 0.0,
                                 analytic / numeric[ch] if numeric[ch] != 0 else np.nan,
                                 relative_error(analytic, numeric[ch])])
    frame = pd.DataFrame(rows, columns=GRADCHECK_COLUMNS)
    report = GradcheckReport(frame)
    log.info('gradcheck: %d partials over %d Gaussians, max rel err %.3g',
             len(frame), len(ids), report.max_rel_err)
    return report


def gradcheck_rays(scene, offset=RAY_OFFSET):
    """One ray per Gaussian from the first camera (or the -z side), passing
    `offset` Mahalanobis units beside its mean.

    A ray through the mean itself has zero mean, rotation and scale partials
    for that Gaussian.
    """
    origin = scene.cameras[0].position if scene.cameras else np.array([0.0, 0.0, -10.0])
    rays = []
    for g in scene.gaussians:
        to_mean = g.mean - origin
        if np.linalg.norm(to_mean) == 0:
            continue
        d = normalize(to_mean)
        side = np.cross(d, [0.0, 0.0, 1.0])
        if np.linalg.norm(side) < 1e-6:
            side = np.cross(d, [1.0, 0.0, 0.0])
        side = normalize(side)
        shift = offset / np.sqrt(side @ g.precision @ side)
        rays.append(Ray.towards(origin, to_mean + shift * side))
    return rays
