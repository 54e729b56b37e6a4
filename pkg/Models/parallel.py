"""Tile-parallel map with a fixed tile size.

Results come back in tile order whatever the thread count, and every
random draw is keyed by pixel and sample, so output is identical for any
`threads`.
"""
import numpy as np
from joblib import Parallel, delayed

TILE_SIZE = 1024


def tiles(n, size=TILE_SIZE):
    return [np.arange(lo, min(lo + size, n)) for lo in range(0, n, size)]


def tile_map(fn, items, threads=1):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    return Parallel(n_jobs=threads, prefer='threads')(delayed(fn)(item) for item in items)
