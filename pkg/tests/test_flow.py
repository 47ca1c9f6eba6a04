import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from curvedbm import frames as fr
from curvedbm import geometry as geo
from curvedbm import hyperbolic as hyp
from curvedbm.harness.runners import start_velocity_errors
from curvedbm.variation import flow as fl

H2 = geo.HyperbolicSpace(2)
X0 = np.array([0.0, 1.0])
(V1, D1), (V2, D2) = fl.half_plane_fields()


def V(x):
    return 0.6 * V1(x) + 0.8 * V2(x)


def _path(dt, N=100, seed=0, T=1.0, model=H2, x0=X0):
    return fr.simulate_paths(model, x0, T, dt, seed, np.arange(N))


def test_zero_flow_is_identity():
    p = _path(0.05, 10)
    st_ = fl.picard_flow_F_s(H2, V, fl.CubicScaling(1.0), p, 0.0)
    np.testing.assert_allclose(st_.alpha, p.increments)
    np.testing.assert_allclose(st_.y, p.x, atol=1e-12)


def test_flat_flow_pins_exactly():
    e = geo.Euclidean(2)
    p = _path(0.05, 20, model=e, x0=np.zeros(2))
    const = lambda x: np.broadcast_to([0.3, -0.4], np.shape(x)).copy()  # noqa: E731
    st_ = fl.picard_flow_F_s(e, const, fl.LinearScaling(1.0), p, 0.1)
    np.testing.assert_allclose(st_.y[:, 0], np.tile([0.03, -0.04], (20, 1)), atol=1e-14)
    np.testing.assert_allclose(st_.y[:, -1], p.x[:, -1], atol=1e-13)
    np.testing.assert_allclose(st_.O, np.broadcast_to(np.eye(2), st_.O.shape))


def test_deterministic_path_is_pinned():
    p = _path(0.01, 1)
    p.increments[:] = 0.0
    p = fr.PathBundle(p.dt, p.T, p.seed, p.increments, p.indices,
                      *fr.develop(H2, X0, fr.initial_frame(H2, X0), p.increments)[:2])
    st_ = fl.picard_flow_F_s(H2, V, fl.CubicScaling(1.0), p, 0.1)
    assert hyp.distance(st_.y[:, -1], X0)[0] < 1e-5 * 0.1 * 10


def test_endpoint_pinning_improves_with_dt():
    med = []
    for dt in (0.02, 0.005):
        p = _path(dt, 100, 3)
        st_ = fl.picard_flow_F_s(H2, V, fl.CubicScaling(1.0), p, 0.1)
        med.append(float(np.median(hyp.distance(st_.y[:, -1], p.x[:, -1]))))
        assert st_.orthogonality_defect < 1e-12
    assert med[1] < med[0] / 2.5
    assert med[1] < 0.01


def test_picard_contracts():
    st_ = fl.picard_flow_F_s(H2, V, fl.CubicScaling(1.0), _path(0.02, 50), 0.1, iterations=6)
    f = st_.contraction_factors
    late = [fi for fi, d in zip(f[2:], st_.sweeps[3:]) if d > 1e-13]
    assert all(fi >= 2 for fi in late)


def test_start_velocity_error_is_first_order():
    a, b = start_velocity_errors(H2, V, X0, 0.1)
    assert b / a == pytest.approx(0.5, abs=0.1)


def test_density_has_unit_mean():
    dens = []
    for k in range(4):
        p = fr.simulate_paths(H2, X0, 1.0, 0.02, 9, np.arange(500 * k, 500 * (k + 1)))
        dens.append(fl.flow_girsanov_density(fl.picard_flow_F_s(H2, V, fl.CubicScaling(1.0), p, 0.1)))
    d = np.concatenate(dens)
    assert abs(d.mean() - 1) < 3 * d.std(ddof=1) / np.sqrt(d.size)


def test_flat_density_is_exact_girsanov():
    e = geo.Euclidean(2)
    p = _path(0.05, 10, model=e, x0=np.zeros(2))
    const = lambda x: np.broadcast_to([0.3, -0.4], np.shape(x)).copy()  # noqa: E731
    st_ = fl.picard_flow_F_s(e, const, fl.LinearScaling(1.0), p, 0.1)
    g = 0.1 * -1.0 * np.array([0.3, -0.4])
    lg = -0.5 * p.increments.sum(axis=1) @ g - 0.25 * (g @ g) * 1.0
    np.testing.assert_allclose(fl.flow_girsanov_density(st_, log=True), lg, atol=1e-13)


@settings(max_examples=25)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_expm_batch_matches_scipy(w):
    A3 = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
    np.testing.assert_allclose(fl._expm_batch(A3[None])[0], expm(A3), atol=1e-12)
    A2 = np.array([[0, -w[0]], [w[0], 0]])
    np.testing.assert_allclose(fl._expm_batch(A2[None])[0], expm(A2), atol=1e-12)
    A4 = np.zeros((4, 4))
    A4[:3, :3] = A3
    np.testing.assert_allclose(fl._expm_batch(A4[None])[0], expm(A4), atol=1e-12)


def test_reverse_path_is_an_involution_and_a_path():
    p = _path(0.05, 5)
    r = fl.reverse_path(p)
    rr = fl.reverse_path(r)
    assert np.array_equal(rr.increments, p.increments) and np.array_equal(rr.x, p.x)
    x, _, _ = fr.develop(H2, r.x[:, 0], r.u[:, 0], r.increments)
    np.testing.assert_allclose(x, r.x, atol=1e-9)


def test_scalings():
    for sc in (fl.CubicScaling(2.0), fl.LinearScaling(2.0)):
        fl.check_scaling(sc, 2.0)
        t = np.linspace(0.1, 1.9, 7)
        fd_ = (sc(t + 1e-6) - sc(t - 1e-6)) / 2e-6
        np.testing.assert_allclose(sc.derivative(t), fd_, atol=1e-8)
    with pytest.raises(ValueError):
        fl.check_scaling(fl.CubicScaling(1.0), 2.0)


def test_argument_checks():
    p = _path(0.1, 2)
    with pytest.raises(ValueError):
        fl.picard_flow_F_s(H2, V, fl.CubicScaling(1.0), p, 0.5)
    bumped = geo.perturbed_conformal(2, geo.RadialBump((0, 1), 0.5), 0.1)
    with pytest.raises(NotImplementedError):
        fl.picard_flow_F_s(bumped, V, fl.CubicScaling(1.0), p, 0.05)


def test_half_plane_field_divergences():
    x = np.array([[0.3, 0.7], [-1.0, 2.0]])
    for Vf, div in fl.half_plane_fields():
        np.testing.assert_allclose(fl.divergence_fd(H2, Vf, x), div(x), atol=1e-8)
        np.testing.assert_allclose(hyp.norm(x, Vf(x)), 1.0)
