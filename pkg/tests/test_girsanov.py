import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvedbm import girsanov as gir
from curvedbm import hyperbolic as hyp
from curvedbm import rng

X, Y = np.array([0.0, 1.0]), np.array([0.8, 1.4])


@settings(max_examples=20)
@given(st.floats(-1, 1), st.floats(-1, 1), st.integers(0, 100))
def test_constant_drift_weight_closed_form(a, b, seed):
    f = np.array([a, b])
    dB = rng.increments(seed, [0, 1], 20, 2, 0.05)
    w = gir.girsanov_weight(dB, f, 0.05)
    exact = 0.5 * dB.sum(axis=1) @ f - 0.25 * (f @ f) * 1.0
    np.testing.assert_allclose(w.log_m[:, -1], exact, atol=1e-12)
    np.testing.assert_allclose(w.energy, (f @ f) * 1.0)


def test_nonfinite_drift_rejected():
    with pytest.raises(ValueError):
        gir.girsanov_weight(np.zeros((1, 2, 2)), np.array([np.nan, 0.0]), 0.1)


def test_euclidean_reweighting_shifts_mean():
    out = gir.girsanov_check("euclidean", (0.3, -0.2), 1.0, 0.02, 4000, 1)
    for rep, target in zip(out["reweighted_mean"], out["expected_mean"]):
        assert abs(rep.estimate - target) < 3.5 * rep.se
    assert abs(out["E_M_T"].estimate - 1) < 3.5 * out["E_M_T"].se


def test_h2_martingale_mean():
    out = gir.girsanov_check("h2", T=1.0, dt=0.02, N=2000, seed=2)
    for k in ("E_M_T/4", "E_M_T/2", "E_M_T"):
        assert abs(out[k].estimate - 1) < 3.5 * out[k].se


def test_bounded_field_is_bounded():
    x = np.array([[5.0, 1e-3], [-2.0, 40.0], [0.0, 1.0]])
    u = np.stack([np.eye(2) * xi[1] for xi in x])
    f = gir.bounded_field_h2(x, u, 0.5)
    assert np.all(np.linalg.norm(f, axis=-1) <= 0.5 * math.sqrt(2) + 1e-12)


def test_midpoint_law_has_unit_mass():
    cdf = gir.midpoint_distance_cdf(X, Y, 1.0, np.linspace(0, 9, 200))
    assert cdf[-1] == pytest.approx(1.0, abs=2e-3)
    assert np.all(np.diff(cdf) >= -1e-12)


def test_bridge_reaches_target_and_matches_midpoint_law():
    res, cps = gir.simulate_bridge(2, X, Y, 1.0, 5e-3, 200, 0)
    assert np.max(res.gap) < 1e-8
    assert np.allclose(res.x[:, 0], X)
    ks = gir.bridge_midpoint_ks(X, Y, 1.0, 5e-3, 400, 1)
    assert ks["p"] > 0.001


def test_starred_bridge_expectation_recovers_kernel():
    rep = gir.bridge_weight_expectation(lambda p, t: np.ones(p.shape[0]), X, Y, 1.0, 0.05, 20, 0,
                                        starred=True)
    p = math.exp(hyp.log_heat_kernel(2, 1.0, hyp.distance(X, Y)))
    assert rep.estimate == pytest.approx(p, rel=1e-12)
    assert rep.extra["p"] == pytest.approx(p)


def test_gradient_functional_zero_exponent_is_one():
    phi = gir.gradient_functional(0.0)
    res, _ = gir.simulate_bridge(2, X, Y, 1.0, 0.05, 5, 0, checkpoints=tuple(range(1, 21)))
    np.testing.assert_allclose(phi(res.x, np.arange(21) * 0.05), 1.0)
