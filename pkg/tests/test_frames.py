import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvedbm import frames as fr
from curvedbm import geometry as geo
from curvedbm import hyperbolic as hyp
from curvedbm import rng

Z0 = np.array([[0.0, 0.7], [-0.7, 0.0]])
z0 = np.array([0.3, -0.5])


def test_flat_development_is_frame_rotated_sum():
    e = geo.Euclidean(2)
    x0 = np.array([0.5, -1.0])
    u0 = np.array([[0.0, -1.0], [1.0, 0.0]])
    dB = rng.increments(1, np.arange(10), 50, 2, 0.02)
    xT, uT, _ = fr.develop(e, x0, u0, dB, store=False)
    np.testing.assert_allclose(xT, x0 + dB.sum(axis=1) @ u0.T, atol=1e-12)
    np.testing.assert_allclose(uT, np.broadcast_to(u0, uT.shape))


def test_frames_stay_orthonormal_on_perturbed_model():
    model = geo.perturbed_conformal(2, geo.RadialBump((0.0, 1.0), 1.0, 0.5), 0.5)
    path = fr.simulate_paths(model, np.array([0.0, 1.0]), 1.0, 0.01, 4, np.arange(50))
    # the pre-correction defect is logged; after correction frames are orthonormal
    assert 0 < path.max_defect < 1e-2
    assert np.max(geo.frame_defect(model, path.x, path.u)) < 1e-10


@settings(max_examples=10)
@given(st.integers(0, 1000))
def test_antidevelop_inverts_develop(seed):
    model = geo.HyperbolicSpace(2)
    path = fr.simulate_paths(model, np.array([0.0, 1.0]), 0.5, 0.05, seed, np.arange(4))
    back = fr.antidevelop(model, path.u[:, 0], path.x)
    np.testing.assert_allclose(back, path.increments, atol=1e-9)


def test_path_bundle_binary_round_trip():
    path = fr.simulate_paths(geo.HyperbolicSpace(2), np.array([0.0, 1.0]), 0.2, 0.05, 3, [5, 9])
    again = fr.PathBundle.from_bytes(path.to_bytes())
    assert np.array_equal(again.increments, path.increments)
    assert list(again.indices) == [5, 9] and again.seed == 3 and again.dt == 0.05
    with pytest.raises(ValueError):
        fr.PathBundle.from_bytes(b"XXXX" + path.to_bytes()[4:])
    text = path.summary_csv(geo.HyperbolicSpace(2))
    assert text.splitlines()[0].endswith("distance") and len(text.splitlines()) == 3


def test_h2_step_displacement_mean():
    # one small step: E d(x, x_1)^2 = 2 m dt + O(dt^2)
    model = geo.HyperbolicSpace(2)
    dt = 1e-3
    path = fr.simulate_paths(model, np.array([0.0, 1.0]), dt, dt, 0, np.arange(20000), store=False)
    d2 = hyp.distance(path.x[:, -1], np.array([0.0, 1.0])) ** 2
    assert d2.mean() == pytest.approx(4 * dt, rel=0.03)


def test_domain_error_raised():
    model = geo.Euclidean(2)
    model.in_domain = lambda x: x[..., 1] > 0
    dB = np.full((1, 3, 2), -1.0)
    with pytest.raises(geo.DomainError):
        fr.develop(model, np.array([0.0, 0.5]), np.eye(2), dB)


def test_flat_tangent_flow_closed_form():
    tangent, fd, _ = fr.endpoint_derivative(geo.Euclidean(2), np.zeros(2), z0, Z0, 1.0, 0.01, 3,
                                            np.arange(100))
    dB = rng.increments(3, np.arange(100), 100, 2, 0.01)
    exact = z0 + dB.sum(axis=1) @ Z0.T
    np.testing.assert_allclose(tangent, exact, atol=1e-12)
    np.testing.assert_allclose(fd, exact, atol=1e-8)


def test_tangent_flow_matches_coupled_difference_on_h2():
    tangent, fd, xT = fr.endpoint_derivative(geo.HyperbolicSpace(2), np.array([0.0, 1.0]), z0, Z0,
                                             0.5, 2.5e-3, 7, np.arange(200))
    d = fd - tangent
    rel = np.sqrt(hyp.inner(xT, d, d) / hyp.inner(xT, tangent, tangent))
    assert np.median(rel) < 0.02


def test_constant_and_general_curvature_actions_agree():
    model = geo.HyperbolicSpace(2)
    x = np.array([0.2, 1.3])
    u = geo.orthonormal_frame(model, x)
    Rf = geo.MetricModel.frame_curvature(model, x, u)
    a, b = np.array([0.4, -1.0]), np.array([0.9, 0.2])
    np.testing.assert_allclose(fr.curvature_action(Rf, a, b),
                               fr.constant_curvature_action(-1.0, a, b), atol=1e-10)


def test_perturbed_frame_moves_along_horizontal_vector():
    model = geo.HyperbolicSpace(2)
    x0 = np.array([0.0, 1.0])
    u0 = fr.initial_frame(model, x0)
    x1, u1 = fr.perturbed_frame(model, x0, u0, z0, Z0, 1e-4)
    np.testing.assert_allclose((x1 - x0) / 1e-4, u0 @ z0, atol=1e-3)
    assert geo.frame_defect(model, x1, u1) < 1e-10
