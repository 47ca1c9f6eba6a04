"""Chunked path parallelism with results independent of the worker count."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np

CHUNK = 500


def chunks(n: int, size: int = CHUNK):
    return [np.arange(a, min(a + size, n)) for a in range(0, n, size)]


def map_paths(fn, n: int, workers: int = 1, size: int = CHUNK):
    """Apply fn(indices) over fixed chunks; outputs are returned in chunk order.

    Chunk boundaries never depend on `workers`, so every reduction done on the
    concatenated result is bit-identical for any pool size.
    """
    parts = chunks(n, size)
    if workers <= 1 or len(parts) == 1:
        return [fn(p) for p in parts]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, parts))


def concat(results, key=None):
    if key is None:
        return np.concatenate(results, axis=0)
    return np.concatenate([r[key] for r in results], axis=0)
