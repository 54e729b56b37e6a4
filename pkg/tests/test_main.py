import json

import numpy as np
import pandas as pd
import pytest

from main import main
from Models.dataloader import read_dataset
from Models.envmap import constant_envmap, write_envmap
from Models.scene_io import read_scene


def test_render_ppm(scenes_dir, tmp_path):
    out = tmp_path / 'toy.ppm'
    assert main(['render', '--scene', str(scenes_dir / 'toy8.json'), '--out', str(out)]) == 0
    assert out.read_bytes().startswith(b'P6\n33 33\n255\n')


def test_render_stochastic_is_thread_independent(scenes_dir, tmp_path):
    outs = []
    for threads in (1, 3):
        out = tmp_path / f'{threads}.csv'
        assert main(['render', '--scene', str(scenes_dir / 'toy8.json'), '--mode', 'stochastic',
                     '--spp', '4', '--threads', str(threads), '--out', str(out)]) == 0
        outs.append(out.read_text())
    assert outs[0] == outs[1]


def test_input_errors_exit_2(scenes_dir, tmp_path, capsys):
    out = str(tmp_path / 'x.ppm')
    assert main(['render', '--out', out]) == 2
    assert main(['render', '--scene', str(tmp_path / 'missing.json'), '--out', out]) == 2
    bad = tmp_path / 'bad.json'
    bad.write_text('{"gaussians": [{"mean": [0, 0]}]}')
    assert main(['render', '--scene', str(bad), '--out', out]) == 2
    assert 'gaussians[0]' in capsys.readouterr().err
    assert main(['render', '--scene', str(scenes_dir / 'toy8.json'), '--camera', '99',
                 '--out', out]) == 2
    assert main(['render', '--scene', str(scenes_dir / 'toy8.json'), '--threads', '0',
                 '--out', out]) == 2
    assert main(['render', '--scene', str(scenes_dir / 'relight8.json'), '--out', out]) == 2


def test_gradcheck(scenes_dir, tmp_path):
    out = tmp_path / 'grad.csv'
    assert main(['gradcheck', '--scene', str(scenes_dir / 'toy8.json'),
                 '--out', str(out)]) == 0
    frame = pd.read_csv(out)
    assert frame['rel_err'].max() <= 1e-4
    assert set(frame['scene_id']) == set(range(8))
    assert main(['gradcheck', '--scene', str(scenes_dir / 'toy8.json'), '--step', '0.1']) == 2
    assert main(['gradcheck', '--scene', str(scenes_dir / 'relight8.json')]) == 2


def test_bench(scenes_dir, tmp_path):
    out = tmp_path / 'bench.csv'
    assert main(['bench', '--scene', str(scenes_dir / 'high_opacity.json'), '--trials', '8000',
                 '--out', str(out)]) == 0
    frame = pd.read_csv(out)
    summary = frame[frame['param'] == 'summary/var_ratio_ssplats_over_ours']
    assert summary['ratio'].iloc[0] > 10.0
    assert main(['bench', '--scene', str(scenes_dir / 'high_opacity.json'), '--trials', '800',
                 '--estimator', 'ours', '--out', str(out)]) == 0
    params = pd.read_csv(out)['param']
    assert not params.str.startswith('ssplats/').any()


def test_generate_then_train(tmp_path):
    scene_path = tmp_path / 'toy.json'
    data = tmp_path / 'data'
    assert main(['-q', 'generate', '--kind', 'toy', '--size', '8', '--dataset', str(data),
                 '--out', str(scene_path)]) == 0
    assert len(read_dataset(data)) == 8
    config = tmp_path / 'cfg.json'
    config.write_text(json.dumps({'batch_size': 2, 'learning_rates': {'appearance': 0.01}}))
    out = tmp_path / 'run'
    assert main(['-q', 'train', '--dataset', str(data), '--config', str(config),
                 '--iterations', '2', '--out', str(out)]) == 0
    assert len(read_scene(out / 'scene.json')) == 8
    assert len(pd.read_csv(out / 'loss.csv')) == 2

    config.write_text('[1, 2]')
    assert main(['-q', 'train', '--dataset', str(data), '--config', str(config),
                 '--out', str(out)]) == 2
    config.write_text(json.dumps({'M_b': 0}))
    assert main(['-q', 'train', '--dataset', str(data), '--config', str(config),
                 '--out', str(out)]) == 2


def test_relight(scenes_dir, tmp_path):
    out = tmp_path / 'lit.png'
    assert main(['relight', '--scene', str(scenes_dir / 'relight8.json'), '--spp', '2',
                 '--out', str(out)]) == 0
    assert out.exists()
    sky = tmp_path / 'sky.envf'
    write_envmap(sky, constant_envmap((0.2, 0.3, 0.4), 4, 2))
    lights = tmp_path / 'lights.json'
    lights.write_text(json.dumps([{'type': 'directional', 'dir': [0., 1., 0.],
                                   'irradiance': [1., 1., 1.]}]))
    csv = tmp_path / 'lit.csv'
    assert main(['relight', '--scene', str(scenes_dir / 'relight8.json'), '--spp', '2',
                 '--lights', str(lights), '--envmap', str(sky), '--env-samples', '2',
                 '--out', str(csv)]) == 0
    frame = pd.read_csv(csv)
    assert np.all(frame[['r', 'g', 'b']].to_numpy() >= 0)
