import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from curvedbm import geometry as geo
from curvedbm import hyperbolic as hyp
from curvedbm.variation import fields as fd

BUMP = geo.RadialBump((0.3, 1.3), 1.0, 0.5)
CONF = geo.ConformalCurve(BUMP)
TENS = geo.AdditiveCurve(geo.TensorBump(geo.RadialBump((0.0, 1.2), 0.8, 1.0),
                                        ((1.0, 0.3), (0.3, -1.0))), volume_preserving=True)

angles = st.floats(0, 2 * np.pi)
pts = st.tuples(st.floats(-0.5, 1.0), st.floats(0.7, 2.0)).map(np.array)


def unit(x, th):
    return x[1] * np.array([np.cos(th), np.sin(th)])


@pytest.mark.parametrize("curve", [CONF, TENS], ids=["conformal", "tensor"])
@settings(max_examples=15)
@given(x=pts, th=angles)
def test_upsilon_analytic_matches_difference_oracle(curve, x, th):
    v = unit(x, th)
    a = fd.upsilon(curve, x, v)
    b = fd.upsilon(curve, x, v, analytic=False)
    np.testing.assert_allclose(a, b, atol=1e-7)
    assert abs(hyp.inner(x, a, v)) < 1e-12


def test_koszul_formula_matches_curve_derivative():
    x = np.array([[0.2, 1.1], [0.4, 1.6]])
    for c in (CONF, TENS):
        dG = fd.dchristoffel_from_tangent(c.base, c.tangent(x), c.tangent_grad(x), x)
        np.testing.assert_allclose(dG, geo.MetricCurve.dchristoffel_dlam(c, x), atol=1e-7)


def test_upsilon_vanishes_for_scaling():
    x = np.array([0.1, 1.4])
    v = unit(x, 0.7)
    assert np.max(np.abs(fd.upsilon(geo.scaling_curve(0.8), x, v))) < 1e-12


def test_upsilon_is_linear_in_the_curve():
    x = np.array([0.3, 1.2])
    v = unit(x, 1.1)
    both = fd.CurveSum([CONF, TENS], [2.0, -0.5])
    exp = 2 * fd.upsilon(CONF, x, v) - 0.5 * fd.upsilon(TENS, x, v)
    np.testing.assert_allclose(fd.upsilon(both, x, v), exp, atol=1e-9)
    assert not both.volume_preserving
    with pytest.raises(NotImplementedError):
        both.model(0.1)


def _y_oracle(curve, x, v, S=15.0):
    """Y by adaptive quadrature of each frame coordinate."""
    E = geo.orthonormal_frame(curve.base, x)

    def coord(s, j):
        xt, vt, Et = hyp.exp_transport(x, v, E, s)
        U = fd.upsilon(curve, xt, vt)
        return 0.5 * np.exp(-s) * hyp.inner(xt, Et[:, j], U)

    c = [integrate.quad(coord, 0, S, args=(j,), limit=400, epsabs=1e-12, epsrel=1e-10)[0]
         for j in range(2)]
    return E @ np.array(c)


@pytest.mark.parametrize("curve", [CONF, TENS], ids=["conformal", "tensor"])
def test_y_field_matches_adaptive_quadrature(curve):
    x = np.array([-0.5, 1.0])
    for th in (0.1, 0.5, 2.8):
        v = unit(x, th)
        Y = fd.y_field(curve, x, v).Y
        np.testing.assert_allclose(Y, _y_oracle(curve, x, v), atol=1e-8)
        assert abs(hyp.inner(x, Y, v)) < 1e-10


def test_support_restriction_agrees_with_full_integration():
    x = np.array([[0.0, 1.0], [1.0, 0.8]])
    v = np.stack([unit(p, 0.3) for p in x])
    a = fd.y_field(CONF, x, v).Y
    b = fd.y_field(CONF, x, v, support=None, panels=96).Y
    # panels straddling the flat support edge limit the full-interval rule
    np.testing.assert_allclose(a, b, atol=5e-8)


def test_rays_missing_the_support_give_zero():
    x = np.array([[0.3, 4.0], [0.3, 4.0]])
    v = np.array([[0.0, 4.0], [0.0, -4.0]])  # straight up misses, straight down hits
    Y = fd.y_field(CONF, x, v).Y
    assert np.all(Y[0] == 0) and np.linalg.norm(Y[1]) > 0


@settings(max_examples=40)
@given(x=pts, th=angles)
def test_ray_hits_ball_against_sampling(x, th):
    c, r = np.array([0.3, 1.3]), 0.5
    v = unit(x, th)
    s = np.linspace(0, 30, 6001)
    ray = hyp.exp_map(np.broadcast_to(x, (s.size, 2)), v[None] * s[:, None])
    closest = float(np.min(hyp.distance(ray, c)))
    hit = bool(fd.ray_hits_ball(x[None], v[None], c, r)[0])
    if abs(closest - r) > 1e-3:
        assert hit == (closest < r)


def test_curve_support_and_tail_bound():
    c, r = fd.curve_support(CONF)
    assert np.allclose(c, (0.3, 1.3)) and r == 1.0
    assert fd.curve_support(geo.scaling_curve(1.0)) is None
    x = np.array([0.0, 1.0])
    yv = fd.y_field(geo.scaling_curve(1.0), x, unit(x, 0.2), S=10.0)
    assert yv.tail_bound >= 0 and yv.rate == pytest.approx(1.0, abs=1e-2)
    with pytest.raises(ValueError):
        fd.y_field(geo.ConformalCurve(BUMP, base="euclidean"), x, unit(x, 0.2))
