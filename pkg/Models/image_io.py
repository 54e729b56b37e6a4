import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

GAMMA = 2.2
IMAGE_COLUMNS = ['row', 'col', 'r', 'g', 'b']
FORMATS = ('ppm6', 'csv', 'png')


@dataclass(frozen=True, eq=False)
class Image:
    """Linear RGB image, float32 (height, width, 3), values in [0, inf)."""
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3 or data.shape[2] != 3 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f'image must be (height, width, 3) with positive size, got {data.shape}')
        object.__setattr__(self, 'data', data)

    @classmethod
    def from_pixels(cls, pixels, width, height):
        """Image from row-major pixel colours (pixel id = row * width + col)."""
        return cls(np.asarray(pixels).reshape(height, width, 3))

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def pixels(self):
        return self.data.reshape(-1, 3).astype(np.float64)

    def to_bytes(self):
        """8-bit tone-mapped copy: clamp to [0, 1], gamma 2.2."""
        v = np.clip(self.data.astype(np.float64), 0.0, 1.0) ** (1.0 / GAMMA)
        return np.rint(255.0 * v).astype(np.uint8)


def psnr(a, b):
    mse = float(np.mean((a.data.astype(np.float64) - b.data.astype(np.float64)) ** 2))
    return np.inf if mse == 0.0 else 10.0 * np.log10(1.0 / mse)


def _write_ppm(img, path):
    header = f'P6\n{img.width} {img.height}\n255\n'.encode('ascii')
    with open(path, 'wb') as f:
        f.write(header)
        f.write(img.to_bytes().tobytes())


def _write_png(img, path):
    from PIL import Image as PilImage
    PilImage.fromarray(img.to_bytes(), mode='RGB').save(path)


def write_image_csv(img, path):
    rows, cols = np.mgrid[0:img.height, 0:img.width]
    values = img.data.reshape(-1, 3).astype(np.float64)
    frame = pd.DataFrame({'row': rows.reshape(-1), 'col': cols.reshape(-1),
                          'r': values[:, 0], 'g': values[:, 1], 'b': values[:, 2]})
    frame.to_csv(path, index=False, columns=IMAGE_COLUMNS)


def read_image_csv(path):
    frame = pd.read_csv(path)
    missing = [c for c in IMAGE_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f'{path}: missing columns {missing}')
    height = int(frame['row'].max()) + 1
    width = int(frame['col'].max()) + 1
    if len(frame) != width * height:
        raise ValueError(f'{path}: expected {width * height} pixels, got {len(frame)}')
    data = np.zeros((height, width, 3), dtype=np.float32)
    data[frame['row'].to_numpy(), frame['col'].to_numpy()] = frame[['r', 'g', 'b']].to_numpy()
    return Image(data)


def write_image(img, path, fmt='ppm6'):
    writers = {'ppm6': _write_ppm, 'csv': write_image_csv, 'png': _write_png}
    if fmt not in writers:
        raise ValueError(f'unknown image format {fmt!r}, expected one of {FORMATS}')
    try:
        writers[fmt](img, path)
    except OSError as e:
        raise OSError(f'cannot write image {path}: {e.strerror or e}') from e
    log.debug('wrote %dx%d %s image to %s', img.width, img.height, fmt, path)
