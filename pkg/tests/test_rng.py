import numpy as np
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from curvedbm import rng
from curvedbm.parallel import chunks, map_paths


@given(st.integers(0, 2**32), st.integers(0, 10**6))
def test_stream_is_reproducible(seed, idx):
    a = rng.rng_stream(seed, idx).random(100)
    b = rng.rng_stream(seed, idx).random(100)
    assert np.array_equal(a, b)


def test_streams_differ_by_seed_and_index():
    base = rng.increments(1, [0, 1, 2], 10, 2, 0.1)
    other = rng.increments(2, [0, 1, 2], 10, 2, 0.1)
    assert np.all(base != other)
    assert not np.array_equal(base[0], base[1])


def test_paired_streams_uncorrelated():
    n = 10**6
    a = rng.standard_normals(rng.rng_stream(0, 0), n)
    b = rng.standard_normals(rng.rng_stream(0, 1), n)
    assert abs(np.corrcoef(a, b)[0, 1]) < 3 / np.sqrt(n)


def test_box_muller_is_standard_normal():
    z = rng.standard_normals(rng.rng_stream(5, 0), 200_000)
    assert stats.kstest(z, "norm").pvalue > 0.01
    assert abs(z.mean()) < 5 / np.sqrt(z.size)


def test_increment_variance_is_two_dt():
    dt = 0.03
    dB = rng.increments(3, np.arange(400), 100, 2, dt)
    var = dB.var()
    assert abs(var / (2 * dt) - 1) < 0.02


def test_increments_depend_only_on_index():
    a = rng.increments(9, [4, 7], 5, 3, 0.1)
    b = rng.increments(9, [7], 5, 3, 0.1)
    assert np.array_equal(a[1], b[0])


def test_uniforms_disjoint_from_increments():
    u = rng.uniforms(0, [0], 1000)[0]
    v = rng.rng_stream(0, 0).random(1000)
    assert not np.allclose(u, v)
    assert stats.kstest(u, "uniform").pvalue > 0.001


def _square(idx):
    return idx.astype(float) ** 2


def test_chunks_are_worker_independent():
    one = np.concatenate(map_paths(_square, 1234, workers=1))
    two = np.concatenate(map_paths(_square, 1234, workers=2))
    assert one.tobytes() == two.tobytes()
    assert [c[0] for c in chunks(1234)] == [0, 500, 1000]
