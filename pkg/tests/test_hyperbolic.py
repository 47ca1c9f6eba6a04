import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from curvedbm import hyperbolic as hyp

coord = st.floats(-3.0, 3.0)
height = st.floats(0.2, 5.0)
comp = st.floats(-2.0, 2.0)


@st.composite
def point(draw, m=2):
    return np.array([draw(coord) for _ in range(m - 1)] + [draw(height)])


@st.composite
def vector(draw, m=2):
    v = np.array([draw(comp) for _ in range(m)])
    if np.linalg.norm(v) < 1e-3:
        v[0] = 1.0
    return v


@given(point(), point(), point())
def test_distance_metric_axioms(x, y, z):
    assert hyp.distance(x, x) == pytest.approx(0.0, abs=1e-12)
    assert hyp.distance(x, y) == pytest.approx(hyp.distance(y, x), rel=1e-12, abs=1e-12)
    assert hyp.distance(x, z) <= hyp.distance(x, y) + hyp.distance(y, z) + 1e-9


@given(point(3), vector(3), st.floats(0.01, 3.0))
def test_exp_log_round_trip(x, v, t):
    v = v / hyp.norm(x, v) * t
    z = hyp.exp_map(x, v)
    assert hyp.distance(x, z) == pytest.approx(t, rel=1e-9)
    np.testing.assert_allclose(hyp.log_map(x, z), v, rtol=1e-7, atol=1e-9)


@given(point(), vector(), vector(), vector(), st.floats(0.1, 4.0))
def test_transport_is_isometric(x, v, a, b, t):
    frames = np.stack([a, b], axis=-1)
    _, vn, F = hyp.exp_transport(x, v, frames, t)
    xn = hyp.exp_map(x, v, t)
    assert hyp.inner(xn, F[:, 0], F[:, 1]) == pytest.approx(hyp.inner(x, a, b), rel=1e-8, abs=1e-9)
    assert hyp.norm(xn, vn) == pytest.approx(hyp.norm(x, v), rel=1e-9)


def test_exp_solves_geodesic_equation(h2):
    x = np.array([0.3, 0.7])
    v = np.array([0.8, -0.4])
    h = 1e-4
    p = [hyp.exp_map(x, v, t) for t in (1 - h, 1.0, 1 + h)]
    acc = (p[0] - 2 * p[1] + p[2]) / h**2
    vel = (p[2] - p[0]) / (2 * h)
    G = h2.christoffel(p[1])
    resid = acc + np.einsum("kij,i,j->k", G, vel, vel)
    assert np.max(np.abs(resid)) < 1e-5


@given(point(), st.floats(-3.0, 3.0))
def test_direction_to_boundary_is_unit_and_aims_at_xi(x, xi):
    v = hyp.unit_direction_to_boundary(x, np.array([xi]))
    assert hyp.norm(x, v) == pytest.approx(1.0, rel=1e-10)
    far = hyp.exp_map(x, v, 25.0)
    assert far[0] == pytest.approx(xi, abs=1e-6)
    assert far[1] < 1e-8


@given(point(), point(), st.floats(-2.0, 2.0))
def test_busemann_is_limit_of_distance_differences(x0, z, xi):
    v = hyp.unit_direction_to_boundary(x0, np.array([xi]))
    far = hyp.exp_map(x0, v, 18.0)
    approx = hyp.distance(z, far) - hyp.distance(x0, far)
    assert hyp.busemann(x0, z, np.array([xi])) == pytest.approx(approx, abs=1e-6)


def test_gromov_product_limit():
    x = np.array([0.1, 0.9])
    xi, eta = np.array([-0.5]), np.array([1.2])
    a = hyp.exp_map(x, hyp.unit_direction_to_boundary(x, xi), 16.0)
    b = hyp.exp_map(x, hyp.unit_direction_to_boundary(x, eta), 16.0)
    assert hyp.gromov_product(x, xi, eta) == pytest.approx(hyp.gromov_product_points(x, a, b),
                                                           abs=1e-6)


def test_constants_and_chain():
    for m in (2, 3, 5):
        c = hyp.constants(m)
        assert c.drift == m - 1 and c.entropy == (m - 1) ** 2
        assert c.spray_divergence == -(m - 1)
        assert c.chain_holds()
    with pytest.raises(ValueError):
        hyp.constants(1)


@pytest.mark.parametrize("m,t,r", [(2, 0.5, 0.7), (2, 2.0, 3.0), (3, 0.5, 0.7), (3, 1.5, 2.5)])
def test_kernel_solves_radial_heat_equation(m, t, r):
    # generator Delta: p_t = p_rr + (m - 1) coth(r) p_r
    def p(t_, r_):
        return np.exp(hyp.log_heat_kernel(m, t_, r_))

    h, k = 1e-3, 1e-4
    pt = (p(t + k, r) - p(t - k, r)) / (2 * k)
    pr = (p(t, r + h) - p(t, r - h)) / (2 * h)
    prr = (p(t, r + h) - 2 * p(t, r) + p(t, r - h)) / h**2
    lap = prr + (m - 1) / np.tanh(r) * pr
    assert pt == pytest.approx(lap, rel=2e-5)


@pytest.mark.parametrize("m", [2, 3])
def test_kernel_radial_derivative(m):
    r = np.array([0.3, 1.0, 4.0])
    h = 1e-5
    fd = (hyp.log_heat_kernel(m, 0.8, r + h) - hyp.log_heat_kernel(m, 0.8, r - h)) / (2 * h)
    np.testing.assert_allclose(hyp.dlog_heat_kernel(m, 0.8, r), fd, rtol=1e-6)


def test_grad_log_kernel_matches_finite_differences():
    x = np.array([0.4, 1.3])
    z = np.array([-0.2, 0.8])
    g = hyp.grad_log_heat_kernel(2, 1.0, x, z)
    h = 1e-6
    fd = np.zeros(2)
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd[i] = (hyp.log_heat_kernel(2, 1.0, hyp.distance(x + e, z))
                 - hyp.log_heat_kernel(2, 1.0, hyp.distance(x - e, z))) / (2 * h)
    # the returned vector is the metric gradient: y^2 times the partials
    np.testing.assert_allclose(g, x[1] ** 2 * fd, rtol=1e-6)


def test_kernel_slice_interpolates():
    table = hyp.KernelSlice(2, 1.0, 12.0)
    r = np.array([0.05, 1.3, 7.7, 15.0])
    np.testing.assert_allclose(table.dlog_p(r), hyp.dlog_heat_kernel(2, 1.0, r), rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("m,t", [(2, 0.1), (2, 1.0), (2, 5.0), (3, 1.0)])
def test_kernel_normalization(m, t):
    assert hyp.kernel_mass(t, m) == pytest.approx(1.0, abs=1e-4)


def test_semigroup():
    direct, total = hyp.chapman_kolmogorov(0.4, 0.6, 1.2)
    assert total == pytest.approx(direct, rel=1e-3)


def test_varadhan_small_time():
    assert hyp.varadhan_ratio(1e-3, 1.0) == pytest.approx(1.0, abs=0.02)
    # the exponent sharpens as t decreases
    assert abs(hyp.varadhan_ratio(1e-4, 1.0) - 1) < abs(hyp.varadhan_ratio(1e-2, 1.0) - 1)
