"""Command line: render, gradcheck, bench, train, relight, generate.

Every command is deterministic for a fixed --seed and any --threads.
Exit codes: 0 success, 1 check failed, 2 invalid input.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np
import pandas as pd

import generate_data
from Models.blending import DEFAULT_M_F
from Models.dataloader import read_dataset, write_dataset
from Models.envmap import read_envmap
from Models.errors import ConfigError, GeometryError, GradientError, SceneError
from Models.gaussian import Ray
from Models.gradcheck import GRADCHECK_COLUMNS, fd_gradcheck, gradcheck_rays
from Models.gradients import DEFAULT_M_B, VARIANCE_COLUMNS, variance_study
from Models.image_io import FORMATS, write_image
from Models.relight import EnvmapLight
from Models.render import DEFAULT_RELIGHT_M_F, RENDER_MODES, relight_image, render_image
from Models.scene_io import read_lights, read_scene, write_scene
from Models.torch.torch_trainer import TrainConfig, train

log = logging.getLogger('main')

INPUT_ERRORS = (SceneError, GeometryError, ConfigError, GradientError, ValueError, OSError,
                IndexError)


def _image_format(path, fmt):
    if fmt:
        return fmt
    ext = os.path.splitext(path)[1].lower()
    return {'.csv': 'csv', '.png': 'png'}.get(ext, 'ppm6')


def _camera(scene, index):
    if not 0 <= index < len(scene.cameras):
        raise IndexError(f'camera {index} out of range (scene has {len(scene.cameras)})')
    return scene.cameras[index]


def cmd_render(args):
    scene = read_scene(args.scene)
    img = render_image(scene, _camera(scene, args.camera), args.mode, args.spp, args.seed,
                       args.threads)
    write_image(img, args.out, _image_format(args.out, args.format))
    return 0


def cmd_gradcheck(args):
    scene = read_scene(args.scene)
    frames = [fd_gradcheck(scene, ray, args.step, scene_id=k).frame
              for k, ray in enumerate(gradcheck_rays(scene))]
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=GRADCHECK_COLUMNS)
    if args.out:
        frame.to_csv(args.out, index=False)
    worst = float(frame['rel_err'].max()) if len(frame) else 0.0
    print(f'{len(frame)} partials, max relative error {worst:.3g} (tolerance {args.tolerance:g})')
    return 0 if worst <= args.tolerance else 1


def _bench_ray(scene):
    if scene.cameras:
        cam = scene.cameras[0]
        return cam.generate_rays().ray((cam.height // 2) * cam.width + cam.width // 2)
    return Ray(np.zeros(3), np.array([0.0, 0.0, 1.0]))


def cmd_bench(args):
    scene = read_scene(args.scene)
    frame, ratio = variance_study(_bench_ray(scene), scene, args.spp, args.trials, args.seed)
    if args.estimator != 'both':
        frame = frame[frame['param'].str.startswith(f'{args.estimator}/')]
    summary = pd.DataFrame([[0, 'summary/var_ratio_ssplats_over_ours', np.nan, np.nan, np.nan, ratio]],
                           columns=VARIANCE_COLUMNS)
    frame = pd.concat([frame, summary], ignore_index=True)
    frame.to_csv(args.out, index=False)
    print(f'variance ratio ssplats/ours: {ratio:.3g}')
    return 0


def cmd_train(args):
    if args.scene:
        scene = read_scene(args.scene)
    else:
        scene = generate_data.generate_random_scene(args.random_init, args.seed)
    dataset = read_dataset(args.dataset)
    doc = {}
    if args.config:
        with open(args.config) as f:
            doc = json.load(f)
        if not isinstance(doc, dict):
            raise ConfigError([('config', 'expected a JSON object')])
    doc.setdefault('seed', args.seed)
    doc['threads'] = args.threads
    if args.iterations is not None:
        doc['iterations'] = args.iterations
    cfg = TrainConfig.from_dict(doc)
    train(scene, dataset, cfg, args.out, progress=not args.quiet)
    return 0


def cmd_relight(args):
    scene = read_scene(args.scene)
    lights = list(scene.lights)
    if args.lights:
        lights = read_lights(args.lights)
    if args.envmap:
        lights.append(EnvmapLight(read_envmap(args.envmap), args.envmap))
    img = relight_image(scene, _camera(scene, args.camera), args.spp, args.seed, lights,
                        args.env_samples, args.threads)
    write_image(img, args.out, _image_format(args.out, args.format))
    return 0


def cmd_generate(args):
    if args.kind == 'toy':
        scene = generate_data.generate_toy_scene(args.seed, args.n, args.size)
    elif args.kind == 'relight':
        scene = generate_data.generate_relight_scene(args.seed, args.n, args.size)
    elif args.kind == 'high_opacity':
        scene = generate_data.generate_high_opacity_scene(args.seed)
    else:
        scene = generate_data.generate_random_scene(args.n, args.seed).replace(
            cameras=generate_data.ring_cameras(size=args.size))
    write_scene(scene, args.out)
    if args.dataset:
        mode = 'stochastic' if scene.is_relightable else 'sorted'
        write_dataset(generate_data.render_dataset(scene, mode=mode, random_seed=args.seed,
                                                   threads=args.threads), args.dataset)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(description='Sorting-free stochastic Gaussian ray tracer')
    parser.add_argument('-v', '--verbose', action='count', default=0)
    parser.add_argument('-q', '--quiet', action='store_true')
    sub = parser.add_subparsers(dest='command', required=True)

    def common(p, spp):
        p.add_argument('--scene')
        p.add_argument('--seed', type=int, default=0)
        p.add_argument('--threads', type=int, default=1)
        if spp is not None:
            p.add_argument('--spp', type=int, default=spp)

    p = sub.add_parser('render')
    common(p, DEFAULT_M_F)
    p.add_argument('--camera', type=int, default=0)
    p.add_argument('--mode', choices=RENDER_MODES, default='sorted')
    p.add_argument('--format', choices=FORMATS)
    p.add_argument('--out', required=True)
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser('gradcheck')
    common(p, None)
    p.add_argument('--tolerance', type=float, default=1e-4)
    p.add_argument('--step', type=float, default=1e-5)
    p.add_argument('--out')
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser('bench')
    common(p, DEFAULT_M_B)
    p.add_argument('--estimator', choices=('ours', 'ssplats', 'both'), default='both')
    p.add_argument('--trials', type=int, default=100_000)
    p.add_argument('--out', required=True)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser('train')
    common(p, None)
    p.add_argument('--random-init', type=int, default=8)
    p.add_argument('--dataset', required=True)
    p.add_argument('--config')
    p.add_argument('--iterations', type=int)
    p.add_argument('--out', required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser('relight')
    common(p, DEFAULT_RELIGHT_M_F)
    p.add_argument('--camera', type=int, default=0)
    p.add_argument('--lights')
    p.add_argument('--envmap')
    p.add_argument('--env-samples', type=int, default=1)
    p.add_argument('--format', choices=FORMATS)
    p.add_argument('--out', required=True)
    p.set_defaults(fn=cmd_relight)

    p = sub.add_parser('generate')
    common(p, None)
    p.add_argument('--kind', choices=('toy', 'relight', 'high_opacity', 'random'), default='toy')
    p.add_argument('--n', type=int, default=8)
    p.add_argument('--size', type=int, default=generate_data.IMAGE_SIZE)
    p.add_argument('--dataset')
    p.add_argument('--out', required=True)
    p.set_defaults(fn=cmd_generate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose > 1 else
                                                logging.INFO if args.verbose else logging.WARNING)
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')
    if args.command != 'generate' and args.command != 'train' and not args.scene:
        print(f'{args.command}: --scene is required', file=sys.stderr)
        return 2
    if args.threads < 1:
        print(f'{args.command}: --threads must be >= 1', file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except INPUT_ERRORS as e:
        print(f'{args.command}: {e}', file=sys.stderr)
        return 2


if __name__ == '__main__':
    sys.exit(main())
