"""Counter-based random streams keyed by (seed, path index)."""

from __future__ import annotations

import numpy as np


def rng_stream(seed: int, path_index: int) -> np.random.Generator:
    """Independent Philox generator for one path; identical on every platform."""
    return np.random.Generator(np.random.Philox(key=np.array([seed, path_index], dtype=np.uint64)))


def box_muller(u1, u2):
    """Pair of standard normals from two uniform arrays on [0, 1)."""
    r = np.sqrt(-2.0 * np.log1p(-u1))
    a = 2.0 * np.pi * u2
    return r * np.cos(a), r * np.sin(a)


def standard_normals(gen: np.random.Generator, n: int) -> np.ndarray:
    k = (n + 1) // 2
    u = gen.random(2 * k)
    z0, z1 = box_muller(u[:k], u[k:])
    return np.concatenate([z0, z1])[:n]


def increments(seed: int, indices, n_steps: int, m: int, dt: float) -> np.ndarray:
    """Driving increments with variance 2 dt per coordinate, shape (len(indices), n_steps, m).

    This is the single place where the generator-Laplacian scaling enters.
    """
    idx = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    out = np.empty((idx.size, n_steps, m))
    scale = np.sqrt(2.0 * dt)
    for j, i in enumerate(idx):
        out[j] = standard_normals(rng_stream(seed, int(i)), n_steps * m).reshape(n_steps, m)
    return out * scale


def uniforms(seed: int, indices, n: int, tag: int = 1) -> np.ndarray:
    """Auxiliary uniforms from a stream disjoint from the increments (tag in the key)."""
    idx = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    out = np.empty((idx.size, n))
    for j, i in enumerate(idx):
        g = np.random.Generator(np.random.Philox(key=np.array([seed, int(i)], dtype=np.uint64),
                                                 counter=np.array([0, 0, 0, tag], dtype=np.uint64)))
        out[j] = g.random(n)
    return out
