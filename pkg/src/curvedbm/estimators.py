"""Monte Carlo estimators for drift, entropy and exit angles.

Every estimator consumes paths in fixed chunks of stream indices and reduces
per-path values in index order, so results do not depend on the number of
workers.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np
from scipy import stats

from . import frames as fr
from . import hyperbolic as hyp
from . import parallel
from . import riccati as ric


@dataclass
class EstimateReport:
    quantity: str
    estimate: float
    se: float
    n: int
    T: float
    dt: float
    seed: int
    route: str
    extra: dict = field(default_factory=dict)

    def ci(self, level: float = 0.95):
        z = stats.norm.ppf(0.5 + level / 2)
        return self.estimate - z * self.se, self.estimate + z * self.se

    def covers(self, value, level=0.95):
        lo, hi = self.ci(level)
        return lo <= value <= hi

    def as_dict(self):
        d = asdict(self)
        d["ci_low"], d["ci_high"] = self.ci()
        return d


def mean_se(values):
    values = np.asarray(values, dtype=float)
    n = values.size
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else math.inf


def _report(name, values, T, dt, seed, route, **extra):
    est, se = mean_se(values)
    return EstimateReport(name, est, se, int(np.size(values)), T, dt, seed, route, extra)


# ---------------------------------------------------------------------------
# path worker


def _chunk_endpoints(indices, model, x0, T, dt, seed, checkpoints):
    """Simulate one chunk; keep positions at checkpoint steps (and frames at the end)."""
    n = int(round(T / dt))
    dB = fr.rng.increments(seed, indices, n, model.m, dt)
    x = np.array(np.broadcast_to(x0, (indices.size, model.m)), dtype=float)
    u = np.array(np.broadcast_to(fr.initial_frame(model, x0), (indices.size, model.m, model.m)))
    keep = {0: x.copy()} if 0 in checkpoints else {}
    defect = 0.0
    for k in range(n):
        x, u, d = fr.bm_step(model, x, u, dB[:, k])
        defect = max(defect, d)
        if k + 1 in checkpoints:
            keep[k + 1] = x.copy()
    ok = model.in_domain(x)
    return {"x": np.stack([keep[c] for c in sorted(checkpoints)], axis=1), "ok": ok, "defect": defect}


def simulate_checkpoints(model, x0, T, dt, N, seed, checkpoints, workers=1):
    """Positions at the given step indices for N paths; shape (N, len(checkpoints), m)."""
    fn = partial(_chunk_endpoints, model=model, x0=np.asarray(x0, dtype=float), T=T, dt=dt,
                 seed=seed, checkpoints=tuple(sorted(set(checkpoints))))
    res = parallel.map_paths(fn, N, workers)
    return parallel.concat(res, "x"), parallel.concat(res, "ok"), max(r["defect"] for r in res)


# ---------------------------------------------------------------------------
# drift


def estimate_drift_displacement(model, x0, T, dt, N, seed, route="increment", workers=1,
                                max_excluded=0.01):
    """Linear drift from displacement: plain d(x0, x_T)/T or the increment over [T/2, T]."""
    if T <= 0 or N < 2:
        raise ValueError("need T > 0 and N >= 2")
    n = int(round(T / dt))
    xs, ok, defect = simulate_checkpoints(model, x0, T, dt, N, seed, (n // 2, n), workers)
    excluded = 1.0 - float(np.mean(ok))
    if excluded > max_excluded:
        raise RuntimeError(f"excluded-path fraction {excluded:.3f} exceeds {max_excluded}")
    x0b = np.broadcast_to(np.asarray(x0, dtype=float), xs[:, 0].shape)
    d_half = model.distance(x0b[ok], xs[ok, 0])
    d_end = model.distance(x0b[ok], xs[ok, 1])
    T_half = (n // 2) * dt
    plain = d_end / T
    incr = (d_end - d_half) / (T - T_half)
    reports = {
        "plain": _report("drift", plain, T, dt, seed, "displacement-plain",
                         excluded=excluded, pre_asymptotic=T < 10),
        "increment": _report("drift", incr, T, dt, seed, "displacement-increment",
                             excluded=excluded, pre_asymptotic=T < 10),
    }
    for r in reports.values():
        r.extra["frame_defect"] = defect
    return reports[route] if route in reports else reports


def _ray_misses_support(model, x, v, s):
    """True where the hyperbolic geodesic segment of length s stays clear of the bump support."""
    if not hasattr(model, "clear_of_support"):
        return np.zeros(x.shape[:-1], dtype=bool)
    ok = np.ones(x.shape[:-1], dtype=bool)
    for t in np.arange(0.0, s + 0.25, 0.25):
        p = hyp.exp_map(x, v, t)
        ok &= model.clear_of_support(p, 0.25)
    return ok


def spray_divergence_along(model, x, direction_to, horizon=20.0):
    """Div of the spray at x toward the boundary point approximated by `direction_to`.

    The direction is the hyperbolic log toward the proxy point, renormalized in the
    model metric.  On rays that miss the support of a compact perturbation the
    value is exactly the hyperbolic one.
    """
    x = np.asarray(x, dtype=float)
    v = hyp.log_map(x, direction_to)
    v = v / model.norm(x, v)[..., None]
    if model.constant_curvature is not None:
        return ric.div_geodesic_spray(model, x, v, horizon)
    out = np.full(x.shape[:-1], -(model.m - 1.0))
    vh = v / hyp.norm(x, v)[..., None]
    miss = _ray_misses_support(model, x, vh, horizon + 1.0)
    hit = ~miss
    if np.any(hit):
        out[hit] = ric.div_geodesic_spray(model, x[hit], v[hit], horizon)
    return out


def _chunk_divergence(indices, model, x0, T, dt, seed, every, horizon):
    n = int(round(T / dt))
    stride = max(1, int(round(every / dt)))
    steps = list(range(n // 2, n + 1, stride))
    if steps[-1] != n:
        steps.append(n)
    res = _chunk_endpoints(indices, model, x0, T, dt, seed, tuple(steps))
    xs = res["x"]
    xT = xs[:, -1]
    vals = []
    for j in range(len(steps) - 1):
        vals.append(-spray_divergence_along(model, xs[:, j], xT, horizon))
    return {"v": np.mean(np.stack(vals, axis=1), axis=1), "ok": res["ok"], "n_eval": len(steps) - 1}


def estimate_drift_divergence(model, x0, T, dt, N, seed, horizon=20.0, every=0.5, workers=1):
    """Drift as the time average of -Div of the spray along Brownian paths.

    The time window is [T/2, T) sampled every `every`; the boundary point is
    approximated per path by the endpoint x_T.
    """
    fn = partial(_chunk_divergence, model=model, x0=np.asarray(x0, dtype=float), T=T, dt=dt,
                 seed=seed, every=every, horizon=horizon)
    res = parallel.map_paths(fn, N, workers)
    vals = parallel.concat(res, "v")
    ok = parallel.concat(res, "ok")
    return _report("drift", vals[ok], T, dt, seed, "divergence", horizon=horizon,
                   evaluations_per_path=res[0]["n_eval"])


# ---------------------------------------------------------------------------
# entropy


def estimate_entropy(m, x0, T, dt, N, seed, route="richardson", workers=1):
    """Stochastic entropy from the exact hyperbolic heat kernel along sampled paths.

    Routes: plain -ln p(T)/T; increment over [T/2, T]; richardson combines T/4,
    T/2, T so that terms of the form a ln t + b cancel exactly.
    """
    from .geometry import HyperbolicSpace

    if m not in (2, 3):
        raise ValueError("kernel oracle available for m = 2, 3 only")
    model = HyperbolicSpace(m)
    n = int(round(T / dt))
    if n % 4:
        raise ValueError("T/dt must be divisible by 4")
    cps = (n // 4, n // 2, n)
    xs, ok, _ = simulate_checkpoints(model, x0, T, dt, N, seed, cps, workers)
    x0b = np.broadcast_to(np.asarray(x0, dtype=float), xs[:, 0].shape)
    L = np.stack([hyp.log_heat_kernel(m, c * dt, model.distance(x0b, xs[:, j]))
                  for j, c in enumerate(cps)], axis=1)
    t4, t2, t1 = (c * dt for c in cps)
    routes = {
        "plain": -L[:, 2] / t1,
        "increment": -(L[:, 2] - L[:, 1]) / (t1 - t2),
        "richardson": (2 * L[:, 1] - L[:, 0] - L[:, 2]) / t4,
    }
    reports = {k: _report("entropy", v[ok], T, dt, seed, k) for k, v in routes.items()}
    return reports[route] if route in reports else reports


def inequality_chain(drift: EstimateReport, entropy: EstimateReport, upsilon: float, z=2.5):
    """Audit l^2 <= h <= l*upsilon allowing z combined standard errors of slack."""
    l, h = drift.estimate, entropy.estimate
    s1 = math.hypot(2 * l * drift.se, entropy.se)
    s2 = math.hypot(upsilon * drift.se, entropy.se)
    lower = l * l - h
    upper = h - l * upsilon
    return {
        "l2_minus_h": lower, "l2_minus_h_se": s1,
        "h_minus_lv": upper, "h_minus_lv_se": s2,
        "lower_holds": lower <= z * s1, "upper_holds": upper <= z * s2,
        "holds": (lower <= z * s1) and (upper <= z * s2),
    }


# ---------------------------------------------------------------------------
# exit angles


def to_disk(x):
    """Cayley map from the upper half-plane to the unit disk: w = (z - i)/(z + i)."""
    z = x[..., 0] + 1j * x[..., 1]
    return (z - 1j) / (z + 1j)


def from_disk(w):
    z = 1j * (1 + w) / (1 - w)
    return np.stack([z.real, z.imag], axis=-1)


def poisson_density(theta, w0):
    """Harmonic measure density on the circle seen from w0 (w.r.t. dtheta)."""
    return (1 - abs(w0) ** 2) / (2 * np.pi * np.abs(np.exp(1j * theta) - w0) ** 2)


def _chunk_exit(indices, x0, dt, seed, r_cut, t_max):
    from .geometry import HyperbolicSpace

    model = HyperbolicSpace(2)
    n = int(round(t_max / dt))
    dB = fr.rng.increments(seed, indices, n, 2, dt)
    N = indices.size
    x = np.array(np.broadcast_to(x0, (N, 2)), dtype=float)
    u = np.array(np.broadcast_to(fr.initial_frame(model, x0), (N, 2, 2)))
    angle = np.full(N, np.nan)
    active = np.ones(N, dtype=bool)
    for k in range(n):
        if not np.any(active):
            break
        a = np.flatnonzero(active)
        xa, ua, _ = fr.bm_step(model, x[a], u[a], dB[a, k], reorthonormalize=False)
        x[a], u[a] = xa, ua
        d = hyp.distance(np.asarray(x0, dtype=float), xa)
        done = d > r_cut
        angle[a[done]] = np.angle(to_disk(xa[done]))
        active[a[done]] = False
    return {"angle": angle}


def sample_exit_angle(x0, N, seed, r_cut=15.0, dt=0.01, t_max=60.0, bins=36, workers=1):
    """Exit angles on the disk boundary of H^2 paths started at x0 (half-plane chart)."""
    x0 = np.asarray(x0, dtype=float)
    fn = partial(_chunk_exit, x0=x0, dt=dt, seed=seed, r_cut=r_cut, t_max=t_max)
    ang = parallel.concat(parallel.map_paths(fn, N, workers), "angle")
    exited = np.isfinite(ang)
    a = ang[exited]
    w0 = complex(to_disk(x0))
    edges = np.linspace(-np.pi, np.pi, bins + 1)
    hist, _ = np.histogram(a, edges)
    cdf = harmonic_cdf(edges, w0)
    expected = np.diff(cdf) * a.size
    chi2 = float(np.sum((hist - expected) ** 2 / expected))
    p_chi2 = float(stats.chi2.sf(chi2, bins - 1))
    ks = stats.kstest(a, lambda t: harmonic_cdf(t, w0))
    return {
        "angles": a, "hist": hist, "edges": edges, "expected": expected,
        "chi2": chi2, "p_chi2": p_chi2, "ks_stat": float(ks.statistic), "p_ks": float(ks.pvalue),
        "not_exited": int(np.count_nonzero(~exited)), "w0": w0,
    }


def harmonic_cdf(theta, w0, n=4096):
    """CDF of the Poisson density on [-pi, pi), by cumulative Simpson on a fine grid."""
    from scipy.integrate import cumulative_simpson

    grid = np.linspace(-np.pi, np.pi, n + 1)
    c = cumulative_simpson(poisson_density(grid, w0), x=grid, initial=0.0)
    c /= c[-1]
    return np.interp(theta, grid, c)
