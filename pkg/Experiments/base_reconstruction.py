import itertools
import time

import numpy as np
import pandas as pd

from generate_data import (generate_relight_scene, generate_toy_scene, heldout_lights, initial_guess,
                           render_dataset)
from Models.image_io import psnr
from Models.render import relight_image, render_image
from Models.torch.torch_trainer import TrainConfig, train


def evaluate(scene, dataset, M_f, random_seed, threads=1):
    """Mean PSNR over every dataset view (stochastic renders for relightable scenes)."""
    mode = 'stochastic' if scene.is_relightable else 'sorted'
    values = [psnr(render_image(scene, cam, mode, M_f, random_seed, threads), target)
              for cam, target in zip(dataset.cameras, dataset.images)]
    return float(np.mean(values))


def albedo_error(scene, target):
    return float(np.mean(np.abs(scene.albedos - target.albedos)))


def heldout_psnr(scene, target, lights, M_f, random_seed, threads=1):
    """Mean PSNR of `scene` against `target` over target's cameras, both lit by `lights`."""
    values = [psnr(relight_image(scene, cam, M_f, random_seed, lights, threads=threads),
                   relight_image(target, cam, M_f, random_seed, lights, threads=threads))
              for cam in target.cameras]
    return float(np.mean(values))


def base_reconstruction(kind, image_size, n_iters, iterations, configs, M_f_eval=256,
                        threads=1, print_time=True):
    """Train from a random initial guess towards a rendered ground truth.

    `configs` maps option names to lists of values; every combination is
    trained `n_iters` times with seeds 0..n_iters-1. Relight runs also report
    the albedo error and the PSNR under a light left out of training.
    """
    keys, values = zip(*configs.items())
    combos = [dict(zip(keys, v)) for v in itertools.product(*values)]
    columns = ['kind', 'run', 'iteration', 'loss', 'psnr', 'fwd_ms', 'bwd_ms', 'upd_ms',
               'final_psnr', 'initial_psnr', 'albedo_error', 'heldout_psnr'] + list(keys)
    rows = []
    start = time.time()
    for r in range(n_iters):
        if kind == 'toy':
            target = generate_toy_scene(r, size=image_size)
            dataset = render_dataset(target, random_seed=r, threads=threads)
        elif kind == 'relight':
            target = generate_relight_scene(r, size=image_size)
            dataset = render_dataset(target, mode='stochastic', random_seed=r, threads=threads)
        else:
            raise ValueError(f'unknown reconstruction kind {kind!r}')
        init = initial_guess(target, r)
        initial_psnr = evaluate(init, dataset, M_f_eval, r, threads)
        for c in combos:
            cfg = TrainConfig(iterations=iterations, seed=r, threads=threads, **c)
            scene, reports = train(init, dataset, cfg, progress=False)
            final_psnr = evaluate(scene, dataset, M_f_eval, r, threads)
            albedo, heldout = np.nan, np.nan
            if kind == 'relight':
                albedo = albedo_error(scene, target)
                heldout = heldout_psnr(scene, target, heldout_lights(r), M_f_eval, r, threads)
            for rep in reports:
                rows.append([kind, r] + rep.row() +
                            [final_psnr, initial_psnr, albedo, heldout] + list(c.values()))
            if print_time:
                print(f'Run {r}, {" ".join(f"{k}: {v}" for k, v in c.items())}: '
                      f'PSNR {initial_psnr:.2f} -> {final_psnr:.2f} dB, '
                      f'albedo error {albedo:.4f}, held-out light {heldout:.2f} dB. '
                      f'Total Time: {time.time() - start}')
    return pd.DataFrame(rows, columns=columns)
