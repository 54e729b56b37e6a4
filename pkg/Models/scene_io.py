"""JSON scene files.

    {"background": [r, g, b],
     "gaussians": [{"mean": [..], "quat": [w, x, y, z], "log_scales": [..],
                    "density_logit": d,
                    "appearance": {"emissive": [r, g, b]}
                                | {"reflective": {"albedo": [..], "normal": [..],
                                                  "model": "lambert" | "isotropic"}}}],
     "lights": [{"type": "point", "position": [..], "intensity": [..]}
              | {"type": "directional", "dir": [..], "irradiance": [..]}
              | {"type": "envmap", "path": "sky.envf"} | {"type": "envmap", "constant": [r, g, b]}],
     "cameras": [{"type": "pinhole" | "fisheye", "pose": [12 reals, 3x4 row-major],
                  "fov": radians, "width": px, "height": px}]}

Floats are written with Python's shortest round-trip repr, so
read_scene(write_scene(s)) reproduces every field bit for bit.
"""
import json
import logging
import math
import os

import numpy as np

from Models.camera import FisheyeCamera, PinholeCamera
from Models.envmap import constant_envmap, read_envmap, write_envmap
from Models.errors import GeometryError, SceneError
from Models.gaussian import Emissive, Gaussian, Reflective
from Models.relight import DirectionalLight, EnvmapLight, PointLight
from Models.scene import Scene

log = logging.getLogger(__name__)

QUAT_WARN_TOL = 1e-6

_TOP_FIELDS = {'background', 'gaussians', 'lights', 'cameras'}
_GAUSSIAN_FIELDS = {'mean', 'quat', 'log_scales', 'density_logit', 'appearance'}
_LIGHT_FIELDS = {'point': {'type', 'position', 'intensity'},
                 'directional': {'type', 'dir', 'irradiance'},
                 'envmap': {'type', 'path', 'constant'}}
_CAMERA_FIELDS = {'type', 'pose', 'fov', 'width', 'height'}


def _check_fields(doc, allowed, path, required=None):
    if not isinstance(doc, dict):
        raise SceneError(path, f'expected an object, got {type(doc).__name__}')
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise SceneError(f'{path}.{unknown[0]}' if path else unknown[0], 'unknown field')
    missing = sorted((allowed if required is None else required) - set(doc))
    if missing:
        raise SceneError(f'{path}.{missing[0]}' if path else missing[0], 'missing field')


def _real(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SceneError(path, f'expected a number, got {value!r}')
    if not math.isfinite(value):
        raise SceneError(path, f'must be finite, got {value!r}')
    return float(value)


def _reals(value, path, size):
    if not isinstance(value, list) or len(value) != size:
        raise SceneError(path, f'expected a list of {size} numbers')
    return np.array([_real(v, f'{path}[{k}]') for k, v in enumerate(value)])


def _count(value, path):
    if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
        raise SceneError(path, f'expected a positive integer, got {value!r}')
    return value


def _build(path, factory, *args, **kwargs):
    try:
        return factory(*args, **kwargs)
    except GeometryError as e:
        raise SceneError(path, str(e)) from None


def _appearance(doc, path):
    if not isinstance(doc, dict) or len(doc) != 1:
        raise SceneError(path, 'expected exactly one of "emissive" or "reflective"')
    (kind, value), = doc.items()
    if kind == 'emissive':
        return _build(path, Emissive, _reals(value, f'{path}.emissive', 3))
    if kind == 'reflective':
        sub = f'{path}.reflective'
        _check_fields(value, {'albedo', 'normal', 'model'}, sub, {'albedo', 'normal'})
        normal = _reals(value['normal'], f'{sub}.normal', 3)
        norm = np.linalg.norm(normal)
        if norm == 0.0:
            raise SceneError(f'{sub}.normal', 'zero normal')
        if abs(norm - 1.0) > QUAT_WARN_TOL:
            log.warning('%s.normal has norm %.9g; renormalised', sub, norm)
        return _build(sub, Reflective, _reals(value['albedo'], f'{sub}.albedo', 3),
                      normal if abs(norm - 1.0) <= 1e-9 else normal / norm,
                      value.get('model', 'lambert'))
    raise SceneError(f'{path}.{kind}', 'unknown appearance type')


def _gaussian(doc, path):
    _check_fields(doc, _GAUSSIAN_FIELDS, path)
    quat = _reals(doc['quat'], f'{path}.quat', 4)
    norm = np.linalg.norm(quat)
    if norm == 0.0:
        raise SceneError(f'{path}.quat', 'zero quaternion')
    if abs(norm - 1.0) > QUAT_WARN_TOL:
        log.warning('%s.quat has norm %.9g; renormalised', path, norm)
    return _build(path, Gaussian,
                  mean=_reals(doc['mean'], f'{path}.mean', 3),
                  rotation=quat,
                  log_scales=_reals(doc['log_scales'], f'{path}.log_scales', 3),
                  density_logit=_real(doc['density_logit'], f'{path}.density_logit'),
                  appearance=_appearance(doc['appearance'], f'{path}.appearance'))


def _light(doc, path, base_dir):
    kind = doc.get('type') if isinstance(doc, dict) else None
    if kind not in _LIGHT_FIELDS:
        raise SceneError(f'{path}.type', f'unknown light type {kind!r}')
    if kind == 'point':
        _check_fields(doc, _LIGHT_FIELDS[kind], path)
        return _build(path, PointLight, _reals(doc['position'], f'{path}.position', 3),
                      _reals(doc['intensity'], f'{path}.intensity', 3))
    if kind == 'directional':
        _check_fields(doc, _LIGHT_FIELDS[kind], path)
        return _build(path, DirectionalLight, _reals(doc['dir'], f'{path}.dir', 3),
                      _reals(doc['irradiance'], f'{path}.irradiance', 3))
    _check_fields(doc, _LIGHT_FIELDS[kind], path, {'type'})
    if ('path' in doc) == ('constant' in doc):
        raise SceneError(path, 'envmap light needs exactly one of "path" or "constant"')
    if 'constant' in doc:
        rgb = _reals(doc['constant'], f'{path}.constant', 3)
        return _build(path, EnvmapLight, constant_envmap(rgb), 'constant')
    source = doc['path']
    if not isinstance(source, str):
        raise SceneError(f'{path}.path', 'expected a file name')
    return EnvmapLight(read_envmap(os.path.join(base_dir, source)), source)


def _camera(doc, path):
    _check_fields(doc, _CAMERA_FIELDS, path)
    pose = _reals(doc['pose'], f'{path}.pose', 12).reshape(3, 4)
    fov = _real(doc['fov'], f'{path}.fov')
    width = _count(doc['width'], f'{path}.width')
    height = _count(doc['height'], f'{path}.height')
    if doc['type'] == 'pinhole':
        return _build(path, PinholeCamera, pose, width, height, fov)
    if doc['type'] == 'fisheye':
        return _build(path, FisheyeCamera, pose, width, height, fov)
    raise SceneError(f'{path}.type', f'unknown camera type {doc["type"]!r}')


def scene_from_dict(doc, base_dir='.'):
    _check_fields(doc, _TOP_FIELDS, '', required={'gaussians'})

    def items(name):
        value = doc.get(name, [])
        if not isinstance(value, list):
            raise SceneError(name, 'expected a list')
        return value

    background = _reals(doc.get('background', [0.0, 0.0, 0.0]), 'background', 3)
    if np.any(background < 0):
        raise SceneError('background', 'must be non-negative')
    return Scene(
        gaussians=[_gaussian(g, f'gaussians[{k}]') for k, g in enumerate(items('gaussians'))],
        lights=[_light(l, f'lights[{k}]', base_dir) for k, l in enumerate(items('lights'))],
        background=background,
        cameras=[_camera(c, f'cameras[{k}]') for k, c in enumerate(items('cameras'))],
    )


def read_scene(path):
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise SceneError(str(path), f'malformed JSON: {e}') from None
    scene = scene_from_dict(doc, os.path.dirname(os.path.abspath(path)))
    log.info('read %s: %d Gaussians, %d lights, %d cameras', path, len(scene),
             len(scene.lights), len(scene.cameras))
    return scene


def _floats(values):
    return [float(v) for v in np.asarray(values).reshape(-1)]


def _appearance_dict(app):
    if isinstance(app, Emissive):
        return {'emissive': _floats(app.rgb)}
    return {'reflective': {'albedo': _floats(app.albedo), 'normal': _floats(app.normal),
                           'model': app.model}}


def _light_dict(light, base_dir, k):
    if isinstance(light, PointLight):
        return {'type': 'point', 'position': _floats(light.position),
                'intensity': _floats(light.intensity)}
    if isinstance(light, DirectionalLight):
        return {'type': 'directional', 'dir': _floats(light.dir),
                'irradiance': _floats(light.irradiance)}
    if light.source == 'constant' and np.all(light.radiance == light.radiance[0, 0]):
        return {'type': 'envmap', 'constant': _floats(light.radiance[0, 0])}
    name = light.source if light.source != 'constant' else f'envmap_{k}.envf'
    write_envmap(os.path.join(base_dir, name), light.radiance)
    return {'type': 'envmap', 'path': name}


def _camera_dict(cam):
    is_pinhole = isinstance(cam, PinholeCamera)
    return {'type': 'pinhole' if is_pinhole else 'fisheye', 'pose': _floats(cam.pose),
            'fov': float(cam.fov_y if is_pinhole else cam.fov),
            'width': cam.width, 'height': cam.height}


def scene_to_dict(scene, base_dir='.'):
    return {
        'background': _floats(scene.background),
        'gaussians': [{'mean': _floats(g.mean), 'quat': _floats(g.rotation),
                       'log_scales': _floats(g.log_scales), 'density_logit': float(g.density_logit),
                       'appearance': _appearance_dict(g.appearance)} for g in scene.gaussians],
        'lights': [_light_dict(l, base_dir, k) for k, l in enumerate(scene.lights)],
        'cameras': [_camera_dict(c) for c in scene.cameras],
    }


def write_scene(scene, path):
    doc = scene_to_dict(scene, os.path.dirname(os.path.abspath(path)))
    with open(path, 'w') as f:
        json.dump(doc, f, indent=1, allow_nan=False)
        f.write('\n')


def read_lights(path):
    """Lights from a JSON file: a list of light objects or {"lights": [...]}."""
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise SceneError(str(path), f'malformed JSON: {e}') from None
    if isinstance(doc, dict):
        _check_fields(doc, {'lights'}, '')
        doc = doc['lights']
    if not isinstance(doc, list):
        raise SceneError('lights', 'expected a list')
    base_dir = os.path.dirname(os.path.abspath(path))
    return [_light(l, f'lights[{k}]', base_dir) for k, l in enumerate(doc)]
