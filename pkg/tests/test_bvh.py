import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from generate_data import generate_random_scene
from Models.bvh import (LEAF_SIZE, brute_force_hits, collect_hits, for_each_hit, gaussian_bounds,
                        trace_packet)
from Models.camera import RayBatch
from Models.gaussian import ALPHA_MIN, Gaussian, Ray
from Models.scene import Scene


@pytest.fixture(scope='module')
def scene():
    return generate_random_scene(64, random_seed=3)


@pytest.fixture(scope='module')
def rays():
    rs = np.random.RandomState(4)
    origins = Rotation.random(40, random_state=rs).apply([0., 0., 3.])
    targets = rs.uniform(-0.8, 0.8, (40, 3))
    return [Ray.towards(o, t - o) for o, t in zip(origins, targets)]


def _key(hits):
    return sorted((h.id, h.alpha, h.depth) for h in hits)


def test_traversal_matches_brute_force(scene, rays):
    total = 0
    for ray in rays:
        hits = collect_hits(scene.bvh, scene, ray)
        assert _key(hits) == _key(brute_force_hits(scene, ray))
        assert len({h.id for h in hits}) == len(hits)
        assert all(h.alpha >= ALPHA_MIN for h in hits)
        total += len(hits)
    assert total > 0


def test_nodes_enclose_children_and_primitives(scene):
    bvh = scene.bvh
    for node in range(bvh.n_nodes):
        if bvh.is_leaf(node):
            assert bvh.count[node] <= LEAF_SIZE
            idx = bvh.perm[bvh.start[node]:bvh.start[node] + bvh.count[node]]
            assert np.all(bvh.prim_min[idx] >= bvh.node_min[node])
            assert np.all(bvh.prim_max[idx] <= bvh.node_max[node])
        else:
            for child in (bvh.left[node], bvh.right[node]):
                assert np.all(bvh.node_min[child] >= bvh.node_min[node])
                assert np.all(bvh.node_max[child] <= bvh.node_max[node])
    np.testing.assert_array_equal(np.sort(bvh.perm), np.arange(len(scene)))


def test_bounds_cover_three_sigma():
    g = Gaussian(np.zeros(3), (1., 0., 0., 0.), np.log([0.1, 0.2, 0.3]), 0.)
    box = gaussian_bounds(g)
    np.testing.assert_allclose(box.max, [0.3, 0.6, 0.9])
    assert box.contains(np.diag([0.29, 0.59, 0.89])).all()
    assert not box.contains([[0.31, 0., 0.]]).any()


def test_packet_rows_follow_single_ray_order(scene, rays):
    batch = RayBatch.from_rays(rays)
    table = trace_packet(scene.bvh, scene, batch)
    assert table.n_rays == len(rays)
    for r, ray in enumerate(rays):
        hits = collect_hits(scene.bvh, scene, ray)
        row = np.flatnonzero(table.valid[r])
        assert [int(i) for i in table.ids[row]] == [h.id for h in hits]
        np.testing.assert_allclose(table.alpha[r, row], [h.alpha for h in hits], rtol=1e-12)
        np.testing.assert_allclose(table.depth[r, row], [h.depth for h in hits], rtol=1e-12)


def test_invalid_and_empty(scene):
    assert collect_hits(scene.bvh, scene, Ray(np.full(3, 5.), (0., 0., 1.), valid=False)) == []
    empty = Scene()
    ray = Ray(np.zeros(3), (0., 0., 1.))
    assert collect_hits(empty.bvh, empty, ray) == []
    table = trace_packet(empty.bvh, empty, RayBatch.from_rays([ray]))
    assert table.n_columns == 0


def test_ray_range_limits_hits(three_hit_scene, axis_ray):
    short = Ray(np.zeros(3), (0., 0., 1.), t_max=5.0)
    assert [h.id for h in collect_hits(three_hit_scene.bvh, three_hit_scene, short)] == [0, 1]
    seen = []
    for_each_hit(three_hit_scene.bvh, three_hit_scene, axis_ray, lambda hit: seen.append(hit.id))
    assert sorted(seen) == [0, 1, 2]
