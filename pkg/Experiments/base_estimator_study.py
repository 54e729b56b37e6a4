import time

import numpy as np
import pandas as pd

from generate_data import generate_occluder_scene, generate_random_axis_scene
from Models.blending import NONE, pick_front, sorted_blend
from Models.bvh import collect_hits
from Models.gaussian import Ray
from Models.gradients import gaussian_variance_ratio, variance_study
from Models.rng import Phase, RngStream

AXIS_RAY = Ray(np.zeros(3), np.array([0., 0., 1.]))


def forward_samples(scene, ray, n_trials, seed):
    """Per-trial single-sample colours (n_trials, 3) from one traversal."""
    pick = pick_front(ray, scene, RngStream(seed, 0, Phase.FORWARD, n_samples=n_trials))
    ids = np.atleast_1d(pick.id)
    rgb = scene.colors[np.where(ids == NONE, 0, ids)]
    return np.where((ids == NONE)[:, None], scene.background, rgb)


def base_forward_unbiasedness(n_scenes, n_gaussians, n_trials, random_seed=0, print_time=True):
    columns = ['scene_id', 'n_gaussians', 'channel', 'sorted', 'stochastic', 'stderr', 'z']
    rows = []
    start = time.time()
    rs = np.random.RandomState(random_seed)
    for s in range(n_scenes):
        for n in n_gaussians:
            scene = generate_random_axis_scene(rs, n)
            exact, _ = sorted_blend(collect_hits(scene.bvh, scene, AXIS_RAY), scene.colors,
                                    scene.background)
            samples = forward_samples(scene, AXIS_RAY, n_trials, random_seed + s)
            mean = samples.mean(axis=0)
            stderr = samples.std(axis=0, ddof=1) / np.sqrt(n_trials)
            for ch, name in enumerate('rgb'):
                z = (mean[ch] - exact[ch]) / stderr[ch] if stderr[ch] > 0 else 0.0
                rows.append([s, n, name, exact[ch], mean[ch], stderr[ch], z])
        if print_time:
            print(f'Scene {s}: Total Time: {time.time() - start}')
    return pd.DataFrame(rows, columns=columns)


def base_gradient_study(scenes, M_b, n_trials, random_seed=0, occluder_id=None, print_time=True):
    """variance_study over `scenes` (list of (scene_id, label, scene)); adds the
    z-score of each empirical mean against the analytic value, and with
    `occluder_id` the variance ratio of that Gaussian's opacity gradient."""
    frames = []
    start = time.time()
    for scene_id, label, scene in scenes:
        frame, ratio = variance_study(AXIS_RAY, scene, M_b, n_trials, random_seed + scene_id,
                                      scene_id)
        frame['estimator'] = frame['param'].str.split('/', n=1).str[0]
        frame['component'] = frame['param'].str.split('.').str[-1]
        frame['scene'] = label
        frame['total_ratio'] = ratio
        if occluder_id is not None:
            frame['occluder_ratio'] = gaussian_variance_ratio(frame, occluder_id)
        with np.errstate(divide='ignore', invalid='ignore'):
            frame['z'] = np.where(frame['stderr'] > 0,
                                  (frame['empirical_mean'] - frame['analytic']) / frame['stderr'], 0.0)
        frames.append(frame)
        if print_time:
            print(f'Scene {label}: variance ratio {ratio:.3g}. Total Time: {time.time() - start}')
    return pd.concat(frames, ignore_index=True)


def random_axis_scenes(n_scenes, n_gaussians, random_seed=0):
    rs = np.random.RandomState(random_seed)
    return [(k, f'random_{n_gaussians}', generate_random_axis_scene(rs, n_gaussians))
            for k in range(n_scenes)]


def occluder_scenes(occluder_alphas, n_behind, random_seed=0):
    scenes = []
    for k, a in enumerate(occluder_alphas):
        rs = np.random.RandomState(random_seed)
        scenes.append((k, f'occluder_{a:g}', generate_occluder_scene(rs, n_behind, a)))
    return scenes


def random_occluder_scenes(n_scenes, alpha_range=(0.9, 0.99), n_behind_range=(2, 8), random_seed=0):
    """Occluder scenes with random opacity, Gaussian count and colours behind."""
    rs = np.random.RandomState(random_seed)
    scenes = []
    for k in range(n_scenes):
        scene = generate_occluder_scene(rs, rs.randint(n_behind_range[0], n_behind_range[1] + 1),
                                        rs.uniform(*alpha_range))
        scenes.append((k, 'random_occluder', scene))
    return scenes
