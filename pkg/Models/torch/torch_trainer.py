"""Two-pass scene reconstruction.

Forward: render each batch view (sorted blend, or stochastic picks for
relightable scenes and the full-stochastic mode) and record M_b backward
index samples (I, alpha_I, K) per pixel without evaluating their colours.
Backward: L1 loss, replay the records to get dL/dalpha per hit and dL/dc per
pick, chain through opacity derivatives and shading, merge tile buffers in
tile order, one Adam step.
"""
import logging
import os
import random
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from Models.backprop import backprop_table
from Models.blending import DEFAULT_M_F, pick_table, sorted_blend_table
from Models.bvh import trace_packet
from Models.dataloader import iteration_batches
from Models.errors import ConfigError, GradientError
from Models.gradients import (DEFAULT_M_B, GradBuffer, analytic_grads_table,
                              sample_indices_table, table_alpha_grads)
from Models.image_io import Image
from Models.parallel import tile_map, tiles
from Models.relight import accumulate_pick_grads, pick_colors
from Models.rng import Phase, RngStream, derive_key
from Models.scene import emissive_proxy, with_geometry
from Models.scene_io import write_scene
from Models.torch.torch_params import PARAM_GROUPS, GaussianParams

log = logging.getLogger(__name__)

LOSS_COLUMNS = ['iteration', 'loss', 'psnr', 'fwd_ms', 'bwd_ms', 'upd_ms']
FORWARD_MODES = ('sorted', 'stochastic')
BACKWARD_MODES = ('stochastic', 'analytic')
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-15


def set_torch_seed(random_seed):
    torch.manual_seed(random_seed)
    np.random.seed(random_seed)
    random.seed(random_seed)
    torch.use_deterministic_algorithms(True)


def default_learning_rates(extent=1.0):
    return {'mean': 1.6e-4 * extent, 'rotation': 1e-3, 'log_scales': 5e-3,
            'density_logit': 5e-2, 'appearance': 2.5e-3, 'normal': 1e-3}


@dataclass
class TrainConfig:
    iterations: int = 2000
    M_f: int = DEFAULT_M_F
    M_b: int = DEFAULT_M_B
    learning_rates: dict = field(default_factory=dict)
    forward_mode: str = 'sorted'
    backward_mode: str = 'stochastic'
    seed: int = 0
    batch_size: int = 1
    batch: list = None
    checkpoint_every: int = 0
    geometry_iterations: int = 0
    env_samples: int = 1
    threads: int = 1

    @classmethod
    def from_dict(cls, doc):
        """Config from a JSON-style dict; every invalid field is reported."""
        names = {f.name for f in fields(cls)}
        problems = [(k, 'unknown field') for k in sorted(set(doc) - names)]
        cfg = cls(**{k: v for k, v in doc.items() if k in names})
        problems += cfg.problems()
        if problems:
            raise ConfigError(problems)
        return cfg

    def problems(self):
        out = []
        for name in ('iterations', 'checkpoint_every', 'geometry_iterations'):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 0:
                out.append((name, 'must be a non-negative integer'))
        for name in ('M_f', 'M_b', 'batch_size', 'env_samples', 'threads'):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                out.append((name, 'must be an integer >= 1'))
        if not isinstance(self.learning_rates, dict):
            out.append(('learning_rates', 'must be a mapping'))
        else:
            for group, lr in sorted(self.learning_rates.items()):
                if group not in PARAM_GROUPS:
                    out.append((f'learning_rates.{group}', 'unknown parameter group'))
                elif not isinstance(lr, (int, float)) or not lr >= 0:
                    out.append((f'learning_rates.{group}', 'must be >= 0'))
        if self.forward_mode not in FORWARD_MODES:
            out.append(('forward_mode', f'must be one of {FORWARD_MODES}'))
        if self.backward_mode not in BACKWARD_MODES:
            out.append(('backward_mode', f'must be one of {BACKWARD_MODES}'))
        if self.batch is not None:
            if not isinstance(self.batch, list) or not all(isinstance(b, list) and b for b in self.batch):
                out.append(('batch', 'must be a list of non-empty view index lists'))
        return out

    def resolved_learning_rates(self, scene):
        lrs = default_learning_rates(scene.extent)
        lrs.update(self.learning_rates)
        return lrs


class OptState:
    """Adam over the parameter groups of a GaussianParams."""

    def __init__(self, params, learning_rates):
        self.params = params
        self.optimizer = torch.optim.Adam(
            [{'params': [getattr(params, name)], 'lr': learning_rates[name], 'name': name}
             for name in PARAM_GROUPS],
            betas=ADAM_BETAS, eps=ADAM_EPS)

    @property
    def step_count(self):
        state = self.optimizer.state.get(self.params.mean, {})
        return int(state['step']) if 'step' in state else 0

    def moments_finite(self):
        for state in self.optimizer.state.values():
            for key in ('exp_avg', 'exp_avg_sq'):
                if key in state and not torch.isfinite(state[key]).all():
                    return False
        return True

    def step(self, buffer):
        self.optimizer.zero_grad()
        self.params.set_grads(buffer)
        self.optimizer.step()
        self.params.project_()


@dataclass(frozen=True)
class LossReport:
    iteration: int
    loss: float
    psnr: float
    fwd_ms: float
    bwd_ms: float
    upd_ms: float

    def row(self):
        return [self.iteration, self.loss, self.psnr, self.fwd_ms, self.bwd_ms, self.upd_ms]


def loss_l1(render, target):
    """Mean absolute error and its gradient sign(r - t) / N (float64 array)."""
    if render.data.shape != target.data.shape:
        raise ValueError(f'image size mismatch: {render.data.shape} vs {target.data.shape}')
    diff = render.data.astype(np.float64) - target.data.astype(np.float64)
    return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size


@dataclass(eq=False)
class _TileState:
    rays: object
    table: object
    color: np.ndarray
    record: object = None


def _forward_tile(scene, rays, cfg, seed, stochastic):
    table = trace_packet(scene.bvh, scene, rays)
    if stochastic:
        picker = pick_table(table, RngStream(seed, rays.pixels, Phase.FORWARD, n_samples=cfg.M_f))
        color = pick_colors(scene, rays, picker.ids, picker.depth, seed, Phase.SHADE,
                            env_samples=cfg.env_samples).mean(axis=1)
    else:
        color, _ = sorted_blend_table(table, scene.colors, scene.background)
    record = None
    if cfg.backward_mode == 'stochastic':
        record = sample_indices_table(table, RngStream(seed, rays.pixels, Phase.BACKWARD_I,
                                                       n_samples=cfg.M_b))
    return _TileState(rays, table, color, record)


def _backward_tile(scene, state, upstream, cfg, seed):
    buf = GradBuffer.zeros(len(scene))
    table, rays = state.table, state.rays
    if cfg.backward_mode == 'analytic':
        dc, dalpha = analytic_grads_table(table, scene.colors, scene.background)
        dl_dalpha = np.einsum('rcx,rx->rc', dalpha, upstream)
        np.add.at(buf.appearance, table.ids, dc.T @ upstream)
    else:
        record = state.record
        c_plus = pick_colors(scene, rays, record.I, record.depth_I, seed, Phase.SHADE_PLUS,
                             env_samples=cfg.env_samples)
        c_minus = pick_colors(scene, rays, record.K, record.depth_K, seed, Phase.SHADE_MINUS,
                              env_samples=cfg.env_samples)
        dl_dalpha, dl_dc = table_alpha_grads(record, c_plus, c_minus, upstream, table.n_columns)
        accumulate_pick_grads(scene, rays, record.I, record.depth_I, seed, Phase.SHADE_PLUS,
                              dl_dc, buf, env_samples=cfg.env_samples)
    return backprop_table(scene, rays, table, dl_dalpha, buf)


def _first_bad_pixel(image):
    bad = np.flatnonzero(~np.isfinite(image.data.reshape(-1, 3)).all(axis=1))
    return int(bad[0]) if bad.size else None


def two_pass_iteration(params, dataset, views, cfg, opt, iteration=0):
    """One optimiser step over the views of a batch; returns its LossReport."""
    scene = params.to_scene()
    seed = derive_key(cfg.seed, iteration)
    stochastic = cfg.forward_mode == 'stochastic' or scene.is_relightable
    start = time.perf_counter()
    passes = []
    for v in views:
        cam = dataset.cameras[v]
        rays = cam.generate_rays()
        rays = replace(rays, pixels=rays.pixels + v * cam.width * cam.height)
        chunks = tiles(len(rays))
        states = tile_map(lambda idx: _forward_tile(scene, rays.subset(idx), cfg, seed, stochastic),
                          chunks, cfg.threads)
        render = Image.from_pixels(np.concatenate([s.color for s in states]), cam.width, cam.height)
        passes.append((v, chunks, states, render))
    fwd = time.perf_counter()

    total = GradBuffer.zeros(len(scene))
    losses, mses = [], []
    for v, chunks, states, render in passes:
        target = dataset.images[v]
        loss, dpix = loss_l1(render, target)
        if not np.isfinite(loss):
            raise GradientError('non-finite loss', pixel=_first_bad_pixel(render))
        losses.append(loss)
        mses.append(float(np.mean((render.data.astype(np.float64) - target.data) ** 2)))
        dpix = dpix.reshape(-1, 3)
        buffers = tile_map(lambda k: _backward_tile(scene, states[k], dpix[chunks[k]], cfg, seed),
                           range(len(chunks)), cfg.threads)
        for buf in buffers:
            total.add(buf)
    total.scale(1.0 / len(passes))
    total.check_finite()
    bwd = time.perf_counter()

    opt.step(total)
    upd = time.perf_counter()
    mse = float(np.mean(mses))
    report = LossReport(iteration, float(np.mean(losses)),
                        np.inf if mse == 0.0 else 10.0 * np.log10(1.0 / mse),
                        1e3 * (fwd - start), 1e3 * (bwd - fwd), 1e3 * (upd - bwd))
    log.debug('iteration %d: loss %.6f psnr %.2f', iteration, report.loss, report.psnr)
    return report


def write_loss_csv(reports, path):
    pd.DataFrame([r.row() for r in reports], columns=LOSS_COLUMNS).to_csv(path, index=False)


def _optimise(scene, dataset, cfg, iterations, first, out_dir, progress, desc):
    params = GaussianParams(scene)
    opt = OptState(params, cfg.resolved_learning_rates(scene))
    if cfg.batch:
        batches = [cfg.batch[i % len(cfg.batch)] for i in range(iterations)]
    else:
        batches = iteration_batches(len(dataset), cfg.batch_size, iterations, cfg.seed + first)
    reports = []
    for k in tqdm(range(iterations), disable=not progress, desc=desc):
        it = first + k
        reports.append(two_pass_iteration(params, dataset, list(batches[k]), cfg, opt, it))
        if out_dir is not None and cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
            write_scene(params.to_scene(), os.path.join(out_dir, f'checkpoint_{it + 1:06d}.json'))
    return params.to_scene(), reports


def train(scene, dataset, cfg, out_dir=None, progress=True):
    """Run cfg.iterations two-pass iterations; returns (scene, reports).

    A relightable scene with cfg.geometry_iterations > 0 first fits its
    geometry as an emissive proxy (sorted forward), then trains the
    reflective scene on that geometry. Reports and checkpoints of both stages
    share one iteration count.
    """
    if cfg.backward_mode == 'analytic' and scene.is_relightable:
        raise ConfigError([('backward_mode', 'analytic gradients need an emissive scene')])
    for b in cfg.batch or []:
        if any(not 0 <= v < len(dataset) for v in b):
            raise ConfigError([('batch', f'view index out of range in {b}')])
    set_torch_seed(cfg.seed)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    reports = []
    result = scene
    if cfg.iterations > 0:
        if cfg.geometry_iterations and scene.is_relightable:
            geometry_cfg = replace(cfg, forward_mode='sorted')
            proxy, reports = _optimise(emissive_proxy(scene), dataset, geometry_cfg,
                                       cfg.geometry_iterations, 0, out_dir, progress, 'geometry')
            log.info('geometry stage: %d iterations, psnr %.2f dB', len(reports), reports[-1].psnr)
            scene = with_geometry(scene, proxy)
        result, stage = _optimise(scene, dataset, cfg, cfg.iterations, len(reports), out_dir,
                                  progress, 'train')
        reports += stage
    if out_dir is not None:
        write_scene(result, os.path.join(out_dir, 'scene.json'))
        write_loss_csv(reports, os.path.join(out_dir, 'loss.csv'))
    if reports:
        log.info('trained %d iterations: loss %.6f, psnr %.2f dB', len(reports),
                 reports[-1].loss, reports[-1].psnr)
    return result, reports
