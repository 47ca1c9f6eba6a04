"""Girsanov reweighting and Brownian bridges driven by the heat-kernel gradient.

With driving noise of quadratic variation 2 dt per coordinate, adding a drift
f dt to the noise has density exp(1/2 int <f, dB> - 1/4 int |f|^2 dt).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy import stats

from . import frames as fr
from . import hyperbolic as hyp
from . import parallel
from .estimators import EstimateReport, _report
from .geometry import HyperbolicSpace


@dataclass
class GirsanovWeight:
    log_m: np.ndarray           # (N, n + 1) running log-weight
    energy: np.ndarray          # int |f|^2 dt per path (Novikov diagnostic)

    @property
    def terminal(self):
        return np.exp(self.log_m[:, -1])


def girsanov_weight(increments, f, dt) -> GirsanovWeight:
    """Left-point log-weights for drift values f[:, k] on the same grid as increments."""
    increments = np.asarray(increments, dtype=float)
    f = np.broadcast_to(np.asarray(f, dtype=float), increments.shape)
    if not np.all(np.isfinite(f)):
        raise ValueError("drift functional is not finite along the path")
    inc = 0.5 * np.sum(f * increments, axis=-1) - 0.25 * np.sum(f * f, axis=-1) * dt
    log_m = np.concatenate([np.zeros((increments.shape[0], 1)), np.cumsum(inc, axis=1)], axis=1)
    return GirsanovWeight(log_m, np.sum(f * f, axis=-1).sum(axis=1) * dt)


def bounded_field_h2(x, u, strength=0.5):
    """A bounded smooth frame-coordinate drift on H^2: f = strength * u^-1 W, |W| <= 1."""
    y = x[..., 1]
    W = np.stack([np.tanh(x[..., 0]), 1.0 / (1.0 + (np.log(y)) ** 2)], axis=-1) * y[..., None]
    return strength * np.linalg.solve(u, W[..., None])[..., 0]


def _chunk_girsanov(indices, model_name, c, T, dt, seed, strength):
    n = int(round(T / dt))
    m = 2
    dB = fr.rng.increments(seed, indices, n, m, dt)
    if model_name == "euclidean":
        f = np.broadcast_to(np.asarray(c, dtype=float), dB.shape)
        B_T = dB.sum(axis=1)
        w = girsanov_weight(dB, f, dt)
        return {"log_m": w.log_m[:, [n // 4, n // 2, n]], "BT": B_T}
    model = HyperbolicSpace(2)
    x0 = np.array([0.0, 1.0])
    xs, us, _ = fr.develop(model, x0, fr.initial_frame(model, x0), dB)
    f = bounded_field_h2(xs[:, :-1], us[:, :-1], strength)
    w = girsanov_weight(dB, f, dt)
    return {"log_m": w.log_m[:, [n // 4, n // 2, n]], "BT": xs[:, -1]}


def girsanov_check(model_name="euclidean", c=(0.3, -0.2), T=1.0, dt=0.01, N=10_000, seed=0,
                   strength=0.5, workers=1):
    """E[M_t] at t = T/4, T/2, T, plus the reweighted terminal mean."""
    fn = partial(_chunk_girsanov, model_name=model_name, c=c, T=T, dt=dt, seed=seed,
                 strength=strength)
    res = parallel.map_paths(fn, N, workers)
    logm = parallel.concat(res, "log_m")
    BT = parallel.concat(res, "BT")
    M = np.exp(logm)
    out = {f"E_M_{lab}": _report("girsanov_mean", M[:, j], T, dt, seed, f"t={lab}")
           for j, lab in enumerate(("T/4", "T/2", "T"))}
    shifted = BT * M[:, -1:]
    out["reweighted_mean"] = [_report("reweighted_mean", shifted[:, i], T, dt, seed, f"coord{i}")
                              for i in range(BT.shape[1])]
    if model_name == "euclidean":
        out["expected_mean"] = [float(ci) * T for ci in c]
    return out


# ---------------------------------------------------------------------------
# bridges


@dataclass
class BridgeResult:
    x: np.ndarray              # (N, n + 1, m)
    gap: np.ndarray            # distance of the endpoint to the target
    T: float
    dt: float
    cap_steps: int


def _chunk_bridge(indices, m, x, y, T, dt, seed, cap, checkpoints):
    model = HyperbolicSpace(m)
    n = int(round(T / dt))
    dB = fr.rng.increments(seed, indices, n, m, dt)
    N = indices.size
    xc = np.array(np.broadcast_to(x, (N, m)), dtype=float)
    u = np.array(np.broadcast_to(fr.initial_frame(model, x), (N, m, m)))
    yb = np.broadcast_to(y, (N, m))
    keep = {0: xc.copy()}
    for k in range(n):
        tau = T - k * dt
        if k >= n - cap:
            # deterministic geodesic interpolation toward the target
            v = hyp.log_map(xc, yb) * (dt / tau)
            xc, _, u = hyp.exp_transport(xc, v, u)
        else:
            g = hyp.grad_log_heat_kernel(m, tau, xc, yb)
            drift = 2.0 * np.linalg.solve(u, g[..., None])[..., 0] * dt
            xc, u, _ = fr.bm_step(model, xc, u, dB[:, k] + drift)
        if k + 1 in checkpoints:
            keep[k + 1] = xc.copy()
    return {"x": np.stack([keep[c] for c in sorted(keep)], axis=1),
            "gap": hyp.distance(xc, yb)}


def simulate_bridge(m, x, y, T, dt, N, seed, cap_steps=10, checkpoints=None, workers=1):
    """Bridge paths from x to y in time T on H^m; checkpoints are step indices to keep."""
    n = int(round(T / dt))
    if checkpoints is None:
        checkpoints = (n // 4, n // 2, 3 * n // 4, n)
    fn = partial(_chunk_bridge, m=m, x=np.asarray(x, dtype=float), y=np.asarray(y, dtype=float),
                 T=T, dt=dt, seed=seed, cap=cap_steps, checkpoints=tuple(checkpoints))
    res = parallel.map_paths(fn, N, workers)
    return BridgeResult(parallel.concat(res, "x"), parallel.concat(res, "gap"), T, dt, cap_steps), \
        (0,) + tuple(sorted(checkpoints))


def midpoint_distance_cdf(x, y, T, radii, n_theta=96, n_r=4):
    """CDF of d(x, z) for z distributed as the bridge midpoint on H^2 (radii sorted).

    Density p(T/2, x, z) p(T/2, z, y) / p(T, x, y) integrated in polar
    coordinates about x (dVol = sinh r dr dtheta), Gauss-Legendre in r on
    each interval of `radii` and the periodic trapezoid rule in theta.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    radii = np.asarray(radii, dtype=float)
    half = 0.5 * T
    theta = np.linspace(0.0, 2 * np.pi, n_theta, endpoint=False)
    dirs = np.stack([np.cos(theta), np.sin(theta)], axis=-1) * x[1]
    lpT = hyp.log_heat_kernel(2, T, hyp.distance(x, y))
    gl, gw = np.polynomial.legendre.leggauss(n_r)
    out = np.empty(radii.size)
    acc, prev = 0.0, 0.0
    for i, b in enumerate(radii):
        if b > prev:
            r = prev + (b - prev) * 0.5 * (gl + 1)
            w = (b - prev) * 0.5 * gw
            z = hyp.exp_map(np.broadcast_to(x, (n_r, n_theta, 2)), dirs[None] * r[:, None, None])
            lp = (hyp.log_heat_kernel(2, half, r)[:, None]
                  + hyp.log_heat_kernel(2, half, hyp.distance(z, y)) - lpT)
            acc += float(np.sum(w[:, None] * np.exp(lp) * np.sinh(r)[:, None]) * (2 * np.pi / n_theta))
            prev = b
        out[i] = acc
    return out


def bridge_midpoint_ks(x, y, T=1.0, dt=1e-3, N=2000, seed=0, workers=1):
    """KS test of d(x, X_{T/2}) against the kernel-oracle conditional law."""
    n = int(round(T / dt))
    res, cps = simulate_bridge(2, x, y, T, dt, N, seed, checkpoints=(n // 2, n), workers=workers)
    mid = res.x[:, cps.index(n // 2)]
    r = hyp.distance(np.asarray(x, dtype=float), mid)
    grid = np.linspace(0.0, max(8.0, float(r.max()) + 1.0), 400)
    cdf = midpoint_distance_cdf(x, y, T, grid)
    total = cdf[-1]

    def F(t):
        return np.interp(t, grid, cdf / total)

    ks = stats.kstest(r, F)
    return {"statistic": float(ks.statistic), "p": float(ks.pvalue), "mass": float(total),
            "gap_q99": float(np.quantile(res.gap, 0.99)), "samples": r}


def bridge_reversal_test(x, y, T=1.0, dt=1e-3, N=2000, seed=0, workers=1):
    """Two-sample KS: the reversed x->y bridge at time T/4 versus the y->x bridge at T/4."""
    n = int(round(T / dt))
    fwd, c1 = simulate_bridge(2, x, y, T, dt, N, seed, checkpoints=(n // 4, 3 * n // 4, n),
                              workers=workers)
    bwd, c2 = simulate_bridge(2, y, x, T, dt, N, seed + 1, checkpoints=(n // 4, 3 * n // 4, n),
                              workers=workers)
    yv = np.asarray(y, dtype=float)
    xv = np.asarray(x, dtype=float)
    a = hyp.distance(yv, fwd.x[:, c1.index(3 * n // 4)])
    b = hyp.distance(yv, bwd.x[:, c2.index(n // 4)])
    a2 = hyp.distance(xv, fwd.x[:, c1.index(3 * n // 4)])
    b2 = hyp.distance(xv, bwd.x[:, c2.index(n // 4)])
    t1 = stats.ks_2samp(a, b)
    t2 = stats.ks_2samp(a2, b2)
    return {"p": float(t1.pvalue), "statistic": float(t1.statistic),
            "p_secondary": float(t2.pvalue)}


def bridge_weight_expectation(phi, x, y, T, dt, N, seed, starred=False, workers=1):
    """E over bridge paths of phi(paths, times); starred multiplies by p(T, x, y)."""
    n = int(round(T / dt))
    res, cps = simulate_bridge(2, x, y, T, dt, N, seed, checkpoints=tuple(range(1, n + 1)),
                               workers=workers)
    vals = np.asarray(phi(res.x, np.arange(n + 1) * dt), dtype=float)
    rep = _report("bridge_expectation", vals, T, dt, seed, "bridge")
    if starred:
        p = math.exp(float(hyp.log_heat_kernel(2, T, hyp.distance(np.asarray(x, float), np.asarray(y, float)))))
        rep = EstimateReport(rep.quantity, rep.estimate * p, rep.se * p, rep.n, T, dt, seed, "bridge*",
                             {"p": p})
    return rep


def gradient_functional(q):
    """phi = exp(q int |grad ln p(T - t, x_t, y)| dt) along stored bridge paths."""
    def phi(paths, times):
        T = times[-1]
        y = paths[:, -1]
        dt = times[1] - times[0]
        acc = np.zeros(paths.shape[0])
        for k in range(len(times) - 1):
            g = hyp.grad_log_heat_kernel(2, T - times[k], paths[:, k], y)
            acc += hyp.norm(paths[:, k], g) * dt
        return np.exp(q * acc)
    return phi


__all__ = ["GirsanovWeight", "girsanov_weight", "girsanov_check", "simulate_bridge",
           "bridge_midpoint_ks", "bridge_reversal_test", "bridge_weight_expectation",
           "midpoint_distance_cdf"]
