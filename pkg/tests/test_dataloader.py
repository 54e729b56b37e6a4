import numpy as np
import pytest

from Models.dataloader import (Dataset, create_batches, image_path, iteration_batches,
                               read_dataset, write_dataset)
from Models.errors import SceneError
from Models.image_io import Image


def test_create_batches_keeps_partial_batch():
    epochs = create_batches(5, 2, 2, random_seed=0)
    assert len(epochs) == 2
    for epoch in epochs:
        assert [len(b) for b in epoch] == [2, 2, 1]
        np.testing.assert_array_equal(np.sort(np.concatenate(epoch)), np.arange(5))
    again = create_batches(5, 2, 2, random_seed=0)
    for a, b in zip(epochs[1], again[1]):
        np.testing.assert_array_equal(a, b)


def test_iteration_batches():
    batches = iteration_batches(5, 2, 7, random_seed=1)
    assert len(batches) == 7
    assert [len(b) for b in batches] == [2, 2, 1, 2, 2, 1, 2]


def _images(cameras, rs):
    return [Image(rs.uniform(0, 1, (c.height, c.width, 3))) for c in cameras]


def test_dataset_checks_sizes(toy_scene, rs):
    cameras = list(toy_scene.cameras)
    images = _images(cameras, rs)
    with pytest.raises(ValueError):
        Dataset(cameras, images[:-1])
    images[3] = Image(np.zeros((4, 5, 3)))
    with pytest.raises(ValueError):
        Dataset(cameras, images)


def test_dataset_round_trip(toy_scene, rs, tmp_path):
    cameras = list(toy_scene.cameras)[:3]
    data = Dataset(cameras, _images(cameras, rs))
    write_dataset(data, tmp_path)
    assert (tmp_path / 'images' / 'view_0002.csv').exists()
    assert image_path(tmp_path, 2).endswith('view_0002.csv')
    back = read_dataset(tmp_path)
    assert len(back) == 3
    for a, b in zip(data.cameras, back.cameras):
        np.testing.assert_array_equal(a.pose, b.pose)
        assert (a.width, a.height, a.fov_y) == (b.width, b.height, b.fov_y)
    for a, b in zip(data.images, back.images):
        np.testing.assert_array_equal(a.data, b.data)


def test_cameras_file_must_be_list(tmp_path):
    (tmp_path / 'cameras.json').write_text('{"cameras": []}')
    with pytest.raises(SceneError):
        read_dataset(tmp_path)
