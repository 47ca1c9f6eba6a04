import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvedbm import frames as fr
from curvedbm import geometry as geo
from curvedbm import hyperbolic as hyp
from curvedbm.variation import flow as fl
from curvedbm.variation import ibp

F = ibp.GaussianWindow((0.6, 1.0), 1.0)
BUMP = geo.ConformalCurve(geo.RadialBump((0.0, 1.5), 2.0, 1.0))


@settings(max_examples=25)
@given(st.floats(-2, 2), st.floats(0.3, 3))
def test_window_is_radial_and_has_correct_gradient(a, y):
    x = np.array([a, y])
    c = np.array(F.center)
    assert F.value(x) == pytest.approx(math.exp(-(math.cosh(hyp.distance(x, c)) - 1)), rel=1e-9)
    h = 1e-6
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        assert F.grad(x)[i] == pytest.approx((F.value(x + e) - F.value(x - e)) / (2 * h), abs=1e-7)


def test_translated_window():
    g = ibp.Translated(F, (1.5, 0.0))
    x = np.array([2.1, 1.0])
    assert g.value(x) == pytest.approx(1.0)
    np.testing.assert_allclose(g.grad(x), 0.0, atol=1e-15)


def test_ito_drift_derivative_matches_flow():
    base = geo.HyperbolicSpace(2)
    (V1, _), _ = fl.half_plane_fields()
    p = fr.simulate_paths(base, np.array([0.0, 1.0]), 1.0, 0.05, 1, np.arange(3))
    sc = fl.CubicScaling(1.0)
    s = 1e-5
    st_ = fl.picard_flow_F_s(base, V1, sc, p, s)
    c = np.einsum("nia,nij,nj->na", p.u[:, 0], base.metric(p.x[:, 0]), V1(p.x[:, 0]))
    expected = ibp.ito_drift_derivative(-1.0, 2, sc, c, p.n_steps, p.dt)
    np.testing.assert_allclose(st_.g_ito / s, expected, atol=1e-4)


def test_constant_curve_gives_exact_zero():
    curve = geo.ConstantCurve(geo.HyperbolicSpace(2))
    res = ibp.ibp_check(curve, F, T=0.5, dt=0.05, N=20, seed=1)
    assert res.lhs == 0 and res.rhs == 0 and res.direct == 0


def test_horizontal_translation_equivariance():
    a = 0.7
    moved = geo.ConformalCurve(geo.RadialBump((a, 1.5), 2.0, 1.0))
    kw = dict(T=0.5, dt=0.05, N=20, seed=2)
    r0 = ibp.ibp_check(BUMP, F, (0.0, 1.0), **kw)
    r1 = ibp.ibp_check(moved, ibp.Translated(F, (a, 0.0)), (a, 1.0), **kw)
    for k in ("lhs", "rhs", "direct", "kernel_term"):
        assert getattr(r1, k) == pytest.approx(getattr(r0, k), rel=1e-6, abs=1e-9)


def test_sides_agree_at_small_sample():
    res = ibp.ibp_check(BUMP, F, T=1.0, dt=0.05, N=1000, seed=11)
    assert res.z_score < 3.5
    # the gradient route is a third, independent estimator of the same number
    assert abs(res.direct - res.lhs) < 3.5 * math.hypot(res.direct_se, res.lhs_se)


def test_result_statistics():
    r = ibp.IBPResult(0.2, 0.01, 0.18, 0.02, 0.2, 0.01, 0.0, 0.0, 400, 2.0, 0.02, 0)
    assert r.combined_se == pytest.approx(math.hypot(0.01, 0.02))
    assert r.passed() and r.nonzero()
    assert r.required_n() == math.ceil((3 * 0.02 * 20 / 0.18) ** 2)
    assert r.as_dict()["z_score"] == pytest.approx(r.z_score)
    same = ibp.IBPResult(0.0, 0.0, 0.0, 0.0, 0, 0, 0, 0, 1, 1.0, 0.1, 0)
    assert same.z_score == 0.0 and same.required_n() == math.inf


def test_non_h2_rejected():
    with pytest.raises(NotImplementedError):
        ibp.ibp_check(geo.ConformalCurve(geo.RadialBump((0, 0, 1), 1.0), m=3), F, (0, 0, 1), N=2)
