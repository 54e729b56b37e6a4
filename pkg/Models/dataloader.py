import json
import logging
import os

import numpy as np

from Models.errors import SceneError
from Models.image_io import read_image_csv, write_image_csv
from Models.scene_io import _camera, _camera_dict

log = logging.getLogger(__name__)


def create_batches(num_views, batch_size, num_epochs, random_seed):
    """Epoch-shuffled view batches; the last partial batch of an epoch is kept."""
    epochs = []
    rs = np.random.RandomState(random_seed)
    for e in range(num_epochs):
        this_batch = []
        order = np.arange(num_views)
        rs.shuffle(order)
        i = 0
        while i < num_views:
            this_batch.append(np.copy(order[i:i+batch_size]))
            i += batch_size
        epochs.append(this_batch)
    return epochs


def iteration_batches(num_views, batch_size, iterations, random_seed):
    """One view batch per training iteration, drawn epoch by epoch."""
    per_epoch = -(-num_views // batch_size)
    epochs = create_batches(num_views, batch_size, -(-iterations // per_epoch), random_seed)
    return [batch for epoch in epochs for batch in epoch][:iterations]


class Dataset:
    """Posed target images: `cameras.json` plus `images/view_####.csv`."""

    def __init__(self, cameras, images):
        if len(cameras) != len(images):
            raise ValueError(f'{len(cameras)} cameras but {len(images)} images')
        for k, (cam, img) in enumerate(zip(cameras, images)):
            if (cam.width, cam.height) != (img.width, img.height):
                raise ValueError(f'view {k}: camera is {cam.width}x{cam.height}, '
                                 f'image is {img.width}x{img.height}')
        self.cameras = list(cameras)
        self.images = list(images)

    def __len__(self):
        return len(self.cameras)


def image_path(root, k):
    return os.path.join(root, 'images', f'view_{k:04d}.csv')


def read_dataset(root):
    path = os.path.join(root, 'cameras.json')
    with open(path) as f:
        doc = json.load(f)
    if not isinstance(doc, list):
        raise SceneError(path, 'expected a list of cameras')
    cameras = [_camera(c, f'cameras[{k}]') for k, c in enumerate(doc)]
    images = [read_image_csv(image_path(root, k)) for k in range(len(cameras))]
    log.info('read dataset %s: %d views', root, len(cameras))
    return Dataset(cameras, images)


def write_dataset(dataset, root):
    os.makedirs(os.path.join(root, 'images'), exist_ok=True)
    with open(os.path.join(root, 'cameras.json'), 'w') as f:
        json.dump([_camera_dict(c) for c in dataset.cameras], f, indent=1)
    for k, img in enumerate(dataset.images):
        write_image_csv(img, image_path(root, k))
