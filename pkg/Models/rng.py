"""Counter-based random streams keyed by (seed, pixel, sample, phase).

Each stream element is an independent SplitMix64 sequence whose starting
state is a hash of its key, so any subset of pixels or samples can be drawn
on any worker and reproduce the same numbers. Draws are vectorised over
(pixels x samples) with numpy uint64 arithmetic.
"""
from enum import IntEnum

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1
_TO_UNIT = 1.0 / float(1 << 53)


class Phase(IntEnum):
    FORWARD = 0
    BACKWARD_I = 1
    BACKWARD_K = 2
    SHADE = 3
    SHADE_PLUS = 4
    SHADE_MINUS = 5
    SHADOW = 6
    ENVMAP = 7


def _mix(x):
    with np.errstate(over='ignore'):
        z = x + GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def _u64(values):
    return np.atleast_1d(np.asarray(values)).astype(np.int64).astype(np.uint64)


def derive_key(base, *tags):
    """Key component of a sub-stream, e.g. the shadow phase of light 2
    or the seed of training iteration 17."""
    h = np.array([int(base) & _MASK], dtype=np.uint64)
    for tag in tags:
        h = _mix(h ^ _mix(_u64(int(tag))))
    return int(h[0])


class RngStream:
    """Vectorised stream of uniforms in [0, 1).

    The stream covers `pixels` x `samples` (outer product) unless built with
    `elementwise`, in which case pixel k pairs with sample k.
    """

    def __init__(self, seed, pixels=0, phase=Phase.FORWARD, n_samples=1, sample_offset=0,
                 samples=None, elementwise=False):
        self.seed = int(seed)
        self.pixels = _u64(pixels)
        if samples is None:
            samples = sample_offset + np.arange(n_samples)
        self.samples = _u64(samples)
        self.phase = int(phase) & _MASK
        self.elementwise = elementwise
        h = _mix(_u64(self.seed))
        if elementwise:
            h = _mix(h ^ self.pixels)
            h = _mix(h ^ self.samples)[:, None]
        else:
            h = _mix(h ^ self.pixels)[:, None]
            h = _mix(h ^ self.samples[None, :])
        self._state = _mix(h ^ np.uint64(self.phase))
        self.counter = 0

    @classmethod
    def pairs(cls, seed, pixels, samples, phase):
        return cls(seed, pixels, phase, samples=samples, elementwise=True)

    @property
    def shape(self):
        return self._state.shape

    def uniform(self, *extra):
        """Next draw: an array of shape `self.shape + extra`."""
        count = int(np.prod(extra)) if extra else 1
        steps = np.arange(self.counter, self.counter + count, dtype=np.uint64)
        with np.errstate(over='ignore'):
            z = _mix(self._state[..., None] + steps * GOLDEN)
        self.counter += count
        u = (z >> np.uint64(11)).astype(np.float64) * _TO_UNIT
        return u.reshape(self.shape + tuple(extra))

    def draw(self, index):
        """Uniform keyed by `index` (e.g. a Gaussian id) instead of the counter.

        `index` broadcasts against the stream shape; the counter is untouched,
        so the value does not depend on what else was drawn before.
        """
        index = np.asarray(index).astype(np.int64).astype(np.uint64)
        with np.errstate(over='ignore'):
            z = _mix(_mix(self._state ^ GOLDEN) + index * GOLDEN)
        return (z >> np.uint64(11)).astype(np.float64) * _TO_UNIT

    def split(self, phase, *tags):
        """Fresh stream with the same pixels and samples and a derived phase."""
        if tags:
            phase = derive_key(phase, *tags)
        return RngStream(self.seed, self.pixels.astype(np.int64), phase,
                         samples=self.samples.astype(np.int64), elementwise=self.elementwise)
