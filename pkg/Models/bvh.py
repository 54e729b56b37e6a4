"""Median-split bounding volume hierarchy over Gaussian 3-sigma boxes.

Traversal streams hits to a visitor in traversal order (depth first, left
child first). Callers must not rely on that order being sorted by depth.
"""
import logging
from dataclasses import dataclass

import numpy as np

from Models.gaussian import ALPHA_MIN, max_response_batch, opacity_batch

log = logging.getLogger(__name__)

K_SIGMA = 3.0
LEAF_SIZE = 4


@dataclass(frozen=True)
class Hit:
    id: int
    alpha: float
    depth: float


@dataclass(frozen=True, eq=False)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def contains(self, points):
        p = np.atleast_2d(points)
        return np.all((p >= self.min) & (p <= self.max), axis=-1)


def gaussian_bounds(g, k_sigma=K_SIGMA):
    half = k_sigma * np.sqrt(np.diag(g.covariance))
    return Aabb(g.mean - half, g.mean + half)


def _bounds_arrays(means, covs, k_sigma):
    half = k_sigma * np.sqrt(np.einsum('nii->ni', covs))
    return means - half, means + half


def _slab(bmin, bmax, origins, dirs, t_min, t_max):
    """Ray/box overlap for R rays against one box (or R boxes)."""
    with np.errstate(divide='ignore', invalid='ignore'):
        inv = 1.0 / dirs
        t1 = (bmin - origins) * inv
        t2 = (bmax - origins) * inv
    near = np.fmax.reduce(np.fmin(t1, t2), axis=-1)
    far = np.fmin.reduce(np.fmax(t1, t2), axis=-1)
    return np.fmax(near, t_min) <= np.fmin(far, t_max)


@dataclass(frozen=True, eq=False)
class Bvh:
    node_min: np.ndarray
    node_max: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    perm: np.ndarray
    prim_min: np.ndarray
    prim_max: np.ndarray

    @property
    def n_nodes(self):
        return self.left.shape[0]

    def is_leaf(self, node):
        return self.left[node] < 0


def build(means, covs, k_sigma=K_SIGMA, leaf_size=LEAF_SIZE):
    """Median split over the longest centroid axis; preorder node layout."""
    means = np.asarray(means, dtype=np.float64).reshape(-1, 3)
    covs = np.asarray(covs, dtype=np.float64).reshape(-1, 3, 3)
    n = means.shape[0]
    prim_min, prim_max = _bounds_arrays(means, covs, k_sigma)
    perm = np.arange(n)
    nodes = []

    def emit(lo, hi):
        idx = perm[lo:hi]
        node = len(nodes)
        nodes.append([prim_min[idx].min(axis=0), prim_max[idx].max(axis=0), -1, -1, lo, hi - lo])
        if hi - lo <= leaf_size:
            return node
        centers = means[idx]
        axis = int(np.argmax(centers.max(axis=0) - centers.min(axis=0)))
        perm[lo:hi] = idx[np.argsort(centers[:, axis], kind='stable')]
        mid = lo + (hi - lo) // 2
        nodes[node][2] = emit(lo, mid)
        nodes[node][3] = emit(mid, hi)
        nodes[node][4], nodes[node][5] = 0, 0
        return node

    if n:
        emit(0, n)
    return Bvh(
        node_min=np.array([nd[0] for nd in nodes]).reshape(-1, 3),
        node_max=np.array([nd[1] for nd in nodes]).reshape(-1, 3),
        left=np.array([nd[2] for nd in nodes], dtype=np.int64),
        right=np.array([nd[3] for nd in nodes], dtype=np.int64),
        start=np.array([nd[4] for nd in nodes], dtype=np.int64),
        count=np.array([nd[5] for nd in nodes], dtype=np.int64),
        perm=perm,
        prim_min=prim_min,
        prim_max=prim_max,
    )


def _evaluate(scene, gid, ray):
    t, _ = max_response_batch(ray.origin[None], ray.dir[None], ray.t_min, ray.t_max,
                              scene.means[gid], scene.precisions[gid])
    alpha = opacity_batch(ray.origin[None], ray.dir[None], t, scene.means[gid],
                          scene.precisions[gid], scene.densities[gid])
    return float(alpha[0]), float(t[0])


def _visit_leaf_prim(bvh, scene, gid, ray, visitor):
    if not _slab(bvh.prim_min[gid], bvh.prim_max[gid], ray.origin, ray.dir, ray.t_min, ray.t_max):
        return
    alpha, t = _evaluate(scene, gid, ray)
    if alpha >= ALPHA_MIN and ray.t_min <= t <= ray.t_max:
        visitor(Hit(int(gid), alpha, t))


def for_each_hit(bvh, scene, ray, visitor):
    if not ray.valid or bvh.n_nodes == 0:
        return
    stack = [0]
    while stack:
        node = stack.pop()
        if not _slab(bvh.node_min[node], bvh.node_max[node], ray.origin, ray.dir,
                     ray.t_min, ray.t_max):
            continue
        if bvh.is_leaf(node):
            lo = bvh.start[node]
            for gid in bvh.perm[lo:lo + bvh.count[node]]:
                _visit_leaf_prim(bvh, scene, gid, ray, visitor)
        else:
            stack.append(bvh.right[node])
            stack.append(bvh.left[node])


def collect_hits(bvh, scene, ray):
    hits = []
    for_each_hit(bvh, scene, ray, hits.append)
    return hits


def brute_force_hits(scene, ray):
    """Reference traversal: every Gaussian tested in index order."""
    hits = []
    if ray.valid:
        for gid in range(len(scene.gaussians)):
            _visit_leaf_prim(scene.bvh, scene, gid, ray, hits.append)
    return hits


@dataclass(frozen=True, eq=False)
class HitTable:
    """Dense hits of a ray packet: column c holds Gaussian `ids[c]`.

    Column order equals per-ray traversal order, so row r restricted to
    `valid[r]` is exactly what for_each_hit yields for ray r.
    """
    ids: np.ndarray
    alpha: np.ndarray
    depth: np.ndarray
    valid: np.ndarray

    @property
    def n_rays(self):
        return self.alpha.shape[0]

    @property
    def n_columns(self):
        return self.ids.shape[0]


def trace_packet(bvh, scene, rays):
    """Packet traversal: a node is entered when any active ray overlaps it."""
    n_rays = len(rays)
    columns = []
    if bvh.n_nodes and n_rays:
        stack = [(0, np.flatnonzero(rays.valid))]
        while stack:
            node, active = stack.pop()
            if active.size == 0:
                continue
            hit = _slab(bvh.node_min[node], bvh.node_max[node], rays.origins[active],
                        rays.dirs[active], rays.t_min[active], rays.t_max[active])
            active = active[hit]
            if active.size == 0:
                continue
            if bvh.is_leaf(node):
                lo = bvh.start[node]
                for gid in bvh.perm[lo:lo + bvh.count[node]]:
                    inside = _slab(bvh.prim_min[gid], bvh.prim_max[gid], rays.origins[active],
                                   rays.dirs[active], rays.t_min[active], rays.t_max[active])
                    if inside.any():
                        columns.append((int(gid), active[inside]))
            else:
                stack.append((bvh.right[node], active))
                stack.append((bvh.left[node], active))

    alpha = np.zeros((n_rays, len(columns)))
    depth = np.full((n_rays, len(columns)), np.inf)
    valid = np.zeros((n_rays, len(columns)), dtype=bool)
    for c, (gid, rows) in enumerate(columns):
        o, d = rays.origins[rows], rays.dirs[rows]
        t, _ = max_response_batch(o, d, rays.t_min[rows], rays.t_max[rows],
                                  scene.means[gid], scene.precisions[gid])
        a = opacity_batch(o, d, t, scene.means[gid], scene.precisions[gid], scene.densities[gid])
        ok = (a >= ALPHA_MIN) & (t >= rays.t_min[rows]) & (t <= rays.t_max[rows])
        alpha[rows[ok], c] = a[ok]
        depth[rows[ok], c] = t[ok]
        valid[rows[ok], c] = True
    ids = np.array([gid for gid, _ in columns], dtype=np.int64)
    return HitTable(ids, alpha, depth, valid)


def table_from_hits(hits):
    """Single-row HitTable from a materialised hit list."""
    n = len(hits)
    return HitTable(
        ids=np.array([h.id for h in hits], dtype=np.int64),
        alpha=np.array([[h.alpha for h in hits]]).reshape(1, n),
        depth=np.array([[h.depth for h in hits]]).reshape(1, n),
        valid=np.ones((1, n), dtype=bool),
    )
