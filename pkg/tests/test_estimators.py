import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from curvedbm import estimators as est
from curvedbm import geometry as geo

H2 = geo.HyperbolicSpace(2)
X0 = np.array([0.0, 1.0])


def discrete_drift(dt):
    """Far-field mean radial gain per unit time of one geodesic step.

    Averaging log(cosh rho + sinh rho cos theta) over theta gives
    2 log cosh(rho / 2); rho = sqrt(2 dt) R with R Rayleigh.
    """
    s = math.sqrt(2 * dt)
    val, _ = integrate.quad(lambda r: 2 * math.log(math.cosh(s * r / 2)) * r * math.exp(-r * r / 2),
                            0, np.inf)
    return val / dt


def test_discrete_drift_oracle_expansion():
    for dt in (1e-3, 1e-2):
        assert discrete_drift(dt) == pytest.approx(1 - dt / 3, abs=3 * dt**2)


def test_displacement_increment_matches_discrete_scheme():
    dt = 0.2
    rep = est.estimate_drift_displacement(H2, X0, 20.0, dt, 1000, 3)
    target = discrete_drift(dt)
    assert target < 0.95
    assert abs(rep.estimate - target) < 3.5 * rep.se


def test_plain_route_is_pre_asymptotic_at_short_times():
    reps = est.estimate_drift_displacement(H2, X0, 4.0, 0.05, 500, 1, route="all")
    assert reps["plain"].extra["pre_asymptotic"]
    # d(x0, X_t) / t exceeds the drift for small t (start-up excess of coth)
    assert reps["plain"].estimate > reps["increment"].estimate


def test_divergence_route_exact_on_h2():
    rep = est.estimate_drift_divergence(H2, X0, 4.0, 0.05, 50, 0, every=1.0)
    assert rep.estimate == pytest.approx(1.0, abs=1e-10)


def test_divergence_route_uses_closed_form_off_support():
    model = geo.perturbed_conformal(2, geo.RadialBump((30.0, 1.0), 0.5, 0.5), 0.5)
    x = np.array([[0.0, 1.0], [0.1, 2.0]])
    target = np.array([[-10.0, 1.0], [0.0, 0.01]])
    np.testing.assert_allclose(est.spray_divergence_along(model, x, target), -1.0)


def test_worker_count_does_not_change_estimates():
    a = est.estimate_drift_displacement(H2, X0, 1.0, 0.05, 1100, 2, workers=1)
    b = est.estimate_drift_displacement(H2, X0, 1.0, 0.05, 1100, 2, workers=2)
    assert (a.estimate, a.se) == (b.estimate, b.se)


def test_entropy_routes():
    reps = est.estimate_entropy(2, X0, 20.0, 0.05, 400, 0, route="all")
    for name in ("increment", "richardson"):
        assert abs(reps[name].estimate - 1.0) < 4 * reps[name].se + 0.02
    with pytest.raises(ValueError):
        est.estimate_entropy(2, X0, 1.0, 0.3, 10, 0)
    with pytest.raises(ValueError):
        est.estimate_entropy(4, X0, 1.0, 0.25, 10, 0)


def _rep(value, se):
    return est.EstimateReport("q", value, se, 100, 1.0, 0.1, 0, "r")


def test_inequality_chain_logic():
    assert est.inequality_chain(_rep(1.0, 0.01), _rep(1.0, 0.02), 1.0)["holds"]
    bad = est.inequality_chain(_rep(1.0, 0.01), _rep(1.5, 0.01), 1.0)
    assert bad["lower_holds"] and not bad["upper_holds"]
    assert not est.inequality_chain(_rep(1.2, 0.01), _rep(1.0, 0.01), 2.0)["lower_holds"]


def test_report_interval():
    r = _rep(1.0, 0.1)
    lo, hi = r.ci()
    assert hi - lo == pytest.approx(2 * 1.959964 * 0.1, rel=1e-6)
    assert r.covers(1.15) and not r.covers(1.25)
    assert r.as_dict()["ci_low"] == lo


@given(st.floats(-3, 3), st.floats(0.1, 5))
def test_cayley_round_trip(a, y):
    x = np.array([a, y])
    w = est.to_disk(x)
    assert abs(w) < 1
    np.testing.assert_allclose(est.from_disk(w), x, rtol=1e-9, atol=1e-9)


@given(st.floats(-0.9, 0.9), st.floats(-0.4, 0.4))
def test_poisson_density_normalized(a, b):
    w0 = complex(a, b) * 0.9
    cdf = est.harmonic_cdf(np.array([-np.pi, 0.0, np.pi]), w0)
    assert cdf[0] == 0 and cdf[-1] == pytest.approx(1.0)
    assert est.harmonic_cdf(0.3, 0j) == pytest.approx((0.3 + np.pi) / (2 * np.pi), abs=1e-9)


def test_exit_angles_follow_harmonic_measure():
    res = est.sample_exit_angle(np.array([0.5, 0.7]), 400, 1, r_cut=8.0, dt=0.02, t_max=40.0)
    assert res["not_exited"] == 0
    assert res["p_ks"] > 0.001
