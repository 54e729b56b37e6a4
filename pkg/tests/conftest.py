from pathlib import Path

import numpy as np
import pytest

from generate_data import generate_axis_scene, generate_toy_scene
from Models.gaussian import Ray

SCENES = Path(__file__).resolve().parents[1] / 'scenes'


@pytest.fixture
def rs():
    return np.random.RandomState(0)


@pytest.fixture
def axis_ray():
    return Ray(np.zeros(3), np.array([0., 0., 1.]))


@pytest.fixture
def three_hit_scene():
    """Red, green, blue Gaussians at depths 2, 4, 6 on the z axis over grey."""
    return generate_axis_scene(alphas=[0.6, 0.3, 0.8], depths=[2., 4., 6.],
                               colors=np.eye(3), background=[0.2, 0.2, 0.2])


@pytest.fixture(scope='session')
def toy_scene():
    return generate_toy_scene(size=9)


@pytest.fixture(scope='session')
def scenes_dir():
    return SCENES
