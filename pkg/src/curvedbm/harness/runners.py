"""One runner per CLI subcommand: config in, RunResult out.

Runners compute and judge; they never touch the filesystem.  `passed` is
None when a configuration has no pass/fail criterion attached.
"""

from __future__ import annotations

import math

import numpy as np

from .. import estimators as est
from .. import frames as fr
from .. import geometry as geo
from .. import girsanov as gir
from .. import hyperbolic as hyp
from .. import riccati as ric
from .. import rng
from ..variation import flow as fl
from ..variation import formulas as fm
from ..variation import ibp as ib
from .config import ConfigError, ExperimentConfig, build_base, build_curve, build_model, parse_point
from .report import RunResult


def _est_row(label, rep, target=None):
    lo, hi = rep.ci()
    return {"quantity": label, "estimate": rep.estimate, "se": rep.se, "ci_low": lo,
            "ci_high": hi, "n": rep.n, "target": "" if target is None else target}


def _est_plot(rows):
    return ("estimates", [{"label": r["quantity"], "estimate": r["estimate"], "se": r["se"],
                           "target": r["target"] if r["target"] != "" else None} for r in rows])


def _hyperbolic_only(cfg):
    if cfg.model not in ("h2", "h3"):
        raise ConfigError(f"{cfg.subcommand} needs a hyperbolic model")


# ---------------------------------------------------------------------------


def run_oracle(cfg: ExperimentConfig) -> RunResult:
    """Kernel self-validation: normalization, semigroup and small-time exponent."""
    _hyperbolic_only(cfg)
    m = cfg.dimension
    t = cfg.param("t", 1.0)
    s = cfg.param("s", 0.5)
    r = cfg.param("r", 1.0)
    t_small = cfg.param("t_small", 1e-3)
    r_small = cfg.param("r_small", 1.0)
    rows = []
    mass = hyp.kernel_mass(t, m)
    rows.append({"check": "normalization", "value": mass, "target": 1.0,
                 "error": abs(mass - 1), "tolerance": 1e-4})
    if m == 2:
        direct, total = hyp.chapman_kolmogorov(s, t, r)
        rows.append({"check": "semigroup", "value": total, "target": direct,
                     "error": abs(total / direct - 1), "tolerance": 1e-3})
    ratio = hyp.varadhan_ratio(t_small, r_small, m)
    rows.append({"check": "varadhan", "value": ratio, "target": 1.0, "error": abs(ratio - 1),
                 "tolerance": 0.02})
    for row in rows:
        row["pass"] = row["error"] < row["tolerance"]
    return RunResult(rows, {"m": m}, all(r_["pass"] for r_ in rows),
                     ("bars", {"values": {r_["check"]: r_["error"] / r_["tolerance"] for r_ in rows},
                               "ylabel": "error / tolerance"}))


def run_riccati(cfg: ExperimentConfig) -> RunResult:
    """Stable tensor trace and Div of the spray against coth and -(m - 1)."""
    model = build_model(cfg)
    m = cfg.dimension
    x0 = cfg.start
    v = np.zeros(m)
    v[0] = 1.0
    v = v / model.norm(x0, v)
    st = ric.stable_tensor(model, x0, v, cfg.horizon)
    rows = [{"quantity": "trace", "value": float(st.trace)}]
    passed = None
    if cfg.perturbation == "none" and cfg.model in ("h2", "h3"):
        target = -(m - 1) / math.tanh(cfg.horizon)
        rows[0].update(target=target, error=abs(float(st.trace) - target))
        div = float(ric.div_geodesic_spray(model, x0, v, cfg.horizon))
        rows.append({"quantity": "spray_divergence", "value": div, "target": -(m - 1.0),
                     "error": abs(div + (m - 1.0))})
        tol = cfg.param("tolerance", 1e-10)
        passed = rows[0]["error"] < tol and rows[1]["error"] < tol
    return RunResult(rows, {"horizon": cfg.horizon}, passed)


def run_drift(cfg: ExperimentConfig) -> RunResult:
    """Linear drift by displacement and by the spray-divergence average."""
    model = build_model(cfg)
    x0 = cfg.start
    route = cfg.param("route", "increment")
    disp = est.estimate_drift_displacement(model, x0, cfg.T, cfg.dt, cfg.paths, cfg.seed, route,
                                           cfg.workers)
    div = est.estimate_drift_divergence(model, x0, cfg.T, cfg.dt, cfg.paths, cfg.seed,
                                        cfg.horizon, cfg.param("every", 0.5), cfg.workers)
    target = None
    if cfg.perturbation == "none" and cfg.model in ("h2", "h3"):
        target = hyp.constants(cfg.dimension).drift
    rows = [_est_row("displacement", disp, target), _est_row("divergence", div, target)]
    if target is not None:
        passed = (abs(disp.estimate - target) < cfg.param("tol_displacement", 0.05) * target
                  and abs(div.estimate - target) < cfg.param("tol_divergence", 1e-3) * target)
    else:
        (a, b), (c, d) = disp.ci(), div.ci()
        passed = max(a, c) <= min(b, d)
    summary = {"overlap": max(disp.ci()[0], div.ci()[0]) <= min(disp.ci()[1], div.ci()[1])}
    return RunResult(rows, summary, passed, _est_plot(rows))


def run_entropy(cfg: ExperimentConfig) -> RunResult:
    """Stochastic entropy from the kernel oracle and the drift/entropy/volume chain."""
    _hyperbolic_only(cfg)
    if cfg.perturbation != "none":
        raise ConfigError("the kernel oracle is available for the unperturbed model only")
    m = cfg.dimension
    consts = hyp.constants(m)
    h = est.estimate_entropy(m, cfg.start, cfg.T, cfg.dt, cfg.paths, cfg.seed,
                             cfg.param("route", "richardson"), cfg.workers)
    model = build_base(cfg)
    ell = est.estimate_drift_displacement(model, cfg.start, cfg.T, cfg.dt, cfg.paths, cfg.seed,
                                          "increment", cfg.workers)
    chain = est.inequality_chain(ell, h, consts.volume_entropy)
    rows = [_est_row("entropy", h, consts.entropy), _est_row("drift", ell, consts.drift),
            {"quantity": "volume_entropy", "estimate": consts.volume_entropy, "se": 0.0,
             "target": consts.volume_entropy}]
    tol = cfg.param("tolerance", 0.10)
    passed = abs(h.estimate - consts.entropy) < tol * consts.entropy and chain["holds"]
    return RunResult(rows, chain, passed, _est_plot(rows[:2]))


def run_exit_angles(cfg: ExperimentConfig) -> RunResult:
    """Exit angles on the disk boundary against the Poisson kernel."""
    if cfg.model != "h2" or cfg.perturbation != "none":
        raise ConfigError("exit-angles runs on the unperturbed H^2 model")
    res = est.sample_exit_angle(cfg.start, cfg.paths, cfg.seed, cfg.param("r_cut", 15.0),
                                cfg.dt, cfg.param("t_max", 60.0), cfg.param("bins", 36),
                                cfg.workers)
    rows = [{"bin_low": a, "bin_high": b, "count": int(c), "expected": e}
            for a, b, c, e in zip(res["edges"][:-1], res["edges"][1:], res["hist"],
                                  res["expected"])]
    summary = {k: res[k] for k in ("chi2", "p_chi2", "ks_stat", "p_ks", "not_exited")}
    passed = res["p_ks"] > 0.01 and res["p_chi2"] > 0.01
    return RunResult(rows, summary, passed,
                     ("histogram", {"edges": res["edges"], "hist": res["hist"],
                                    "expected": res["expected"], "xlabel": "exit angle"}))


def run_bridge(cfg: ExperimentConfig) -> RunResult:
    """Bridge midpoint law against the kernel oracle and a time-reversal test."""
    if cfg.model != "h2" or cfg.perturbation != "none":
        raise ConfigError("bridge acceptance uses the unperturbed H^2 model")
    x = cfg.start
    y = parse_point(cfg.param("y", "0.8,1.4"))
    ks = gir.bridge_midpoint_ks(x, y, cfg.T, cfg.dt, cfg.paths, cfg.seed, cfg.workers)
    rev = gir.bridge_reversal_test(x, y, cfg.T, cfg.dt, cfg.paths, cfg.seed + 7919, cfg.workers)
    rows = [{"test": "midpoint_ks", "statistic": ks["statistic"], "p": ks["p"]},
            {"test": "reversal_ks", "statistic": rev["statistic"], "p": rev["p"]}]
    summary = {"oracle_mass": ks["mass"], "gap_q99": ks["gap_q99"],
               "p_reversal_secondary": rev["p_secondary"]}
    passed = ks["p"] > 0.01 and rev["p"] > 0.01
    grid = np.linspace(0.0, float(np.max(ks["samples"])) + 0.5, 200)
    cdf = gir.midpoint_distance_cdf(x, y, cfg.T, grid)
    plot = ("ecdf", {"samples": ks["samples"], "grid": grid, "cdf": cdf / cdf[-1],
                     "xlabel": "d(x, X_{T/2})"})
    return RunResult(rows, summary, passed, plot)


def run_girsanov(cfg: ExperimentConfig) -> RunResult:
    """E[M_t] = 1 for the exponential martingale of a bounded drift."""
    name = "euclidean" if cfg.model.startswith("e") else "h2"
    c = tuple(parse_point(cfg.param("drift", "0.3,-0.2")))
    out = gir.girsanov_check(name, c, cfg.T, cfg.dt, cfg.paths, cfg.seed,
                             cfg.param("strength", 0.5), cfg.workers)
    rows = [_est_row(f"E[M] {k[4:]}", v, 1.0) for k, v in out.items() if k.startswith("E_M")]
    exp_mean = out.get("expected_mean")
    for i, rep in enumerate(out["reweighted_mean"]):
        rows.append(_est_row(f"reweighted mean {i}", rep, None if exp_mean is None else exp_mean[i]))
    mT = out["E_M_T"]
    passed = abs(mT.estimate - 1.0) < 3 * mT.se
    return RunResult(rows, {}, passed, _est_plot(rows))


def _great_window(cfg, curve):
    radius = cfg.param("radius", 0.0) or None
    try:
        return fm.default_window(curve, margin=cfg.param("margin", 1.0), radius=radius)
    except ValueError:
        return fm.default_window(curve, radius=2.0)


def run_great_terms(cfg: ExperimentConfig) -> RunResult:
    """Term-by-term drift derivative; zero for volume-preserving curves."""
    _hyperbolic_only(cfg)
    curve = build_curve(cfg)
    win = _great_window(cfg, curve)
    g = fm.formula_great_terms(curve, n_fiber=cfg.param("fiber", 16), S=cfg.param("S", 15.0),
                               horizon=cfg.horizon, win=win,
                               direct=bool(cfg.param("direct", 0)) and cfg.dimension == 2)
    rows = [{"term": k, "value": v} for k, v in g.terms.items()]
    rows.append({"term": "total", "value": g.total})
    rows.append({"term": "IV_direct", "value": g.iv_direct})
    summary = {"c1_norm": g.c1_norm, "drift": g.drift, "window_radius": g.window_radius,
               "fiber_change": g.fiber_change, "tail_bound": g.tail_bound}
    passed = None
    if cfg.perturbation.startswith("scaling"):
        c = float(cfg.perturbation.split(":")[1])
        oracle = fm.scaling_volume_term(c, cfg.dimension, win.radius, win.center)
        rel = abs(g.terms["II"] - oracle) / abs(oracle)
        summary.update(II_oracle=oracle, II_relative_error=rel)
        passed = rel < cfg.param("tolerance", 1e-6)
    elif curve.volume_preserving:
        summary["bound"] = 1e-3 * g.c1_norm
        passed = abs(g.total) < 1e-3 * g.c1_norm
    return RunResult(rows, summary, passed,
                     ("bars", {"values": {k: v for k, v in g.terms.items()}, "ylabel": "term"}))


def run_entropy_derivative(cfg: ExperimentConfig) -> RunResult:
    """Entropy derivative by two routes; zero for volume-preserving curves."""
    _hyperbolic_only(cfg)
    curve = build_curve(cfg)
    win = _great_window(cfg, curve)
    e = fm.entropy_derivative_symmetric(curve, n_fiber=cfg.param("fiber", 16),
                                        horizon=cfg.horizon, win=win)
    rows = [{"route": "divergence", "value": e.value}, {"route": "ibp", "value": e.value_ibp}]
    summary = {"c1_norm": e.c1_norm, "oracle": e.oracle}
    passed = None
    tol = cfg.param("tolerance", 1e-6)
    if e.oracle is not None:
        errs = [abs(v - e.oracle) / abs(e.oracle) for v in (e.value, e.value_ibp)]
        summary["relative_error"] = max(errs)
        passed = max(errs) < tol
    elif curve.volume_preserving:
        summary["bound"] = 1e-3 * e.c1_norm
        passed = max(abs(e.value), abs(e.value_ibp)) < 1e-3 * e.c1_norm
    return RunResult(rows, summary, passed,
                     ("bars", {"values": {"divergence": e.value, "ibp": e.value_ibp}}))


def run_ibp_check(cfg: ExperimentConfig) -> RunResult:
    """Coupled finite difference versus the pathwise integration-by-parts weight."""
    if cfg.model != "h2":
        raise ConfigError("ibp-check runs on H^2")
    curve = build_curve(cfg)
    f = ib.GaussianWindow(tuple(parse_point(cfg.param("f_center", "0.6,1.0"))),
                          cfg.param("f_width", 1.0))
    res = ib.ibp_check(curve, f, cfg.start, cfg.T, cfg.dt, cfg.paths, cfg.seed, cfg.lam,
                       cfg.param("h", 1e-2), workers=cfg.workers)
    rows = [{"quantity": "lhs_fd", "estimate": res.lhs, "se": res.lhs_se},
            {"quantity": "rhs_weight", "estimate": res.rhs, "se": res.rhs_se},
            {"quantity": "gradient_route", "estimate": res.direct, "se": res.direct_se},
            {"quantity": "kernel_term", "estimate": res.kernel_term, "se": res.kernel_term_se}]
    for r in rows:
        r["target"] = ""
    summary = {"z_score": res.z_score, "combined_se": res.combined_se, "nonzero": res.nonzero(),
               "required_n": res.required_n(), **res.extra}
    constant = cfg.perturbation == "none"
    if constant:
        passed = abs(res.lhs) < 1e-12 and abs(res.rhs) < 1e-12
    else:
        passed = res.passed()
    return RunResult(rows, summary, passed, _est_plot(rows[:3]))


def run_flow_fs(cfg: ExperimentConfig) -> RunResult:
    """Picard flow on path space: contraction, endpoint pinning, start velocity, density."""
    if cfg.model != "h2":
        raise ConfigError("flow-fs runs on H^2")
    base = build_base(cfg)
    s = cfg.param("s", cfg.s0)
    a, b = parse_point(cfg.param("field", "0.6,0.8"))
    (V1, _), (V2, _) = fl.half_plane_fields()

    def V(x):
        return a * V1(x) + b * V2(x)

    scaling = fl.CubicScaling(cfg.T)
    x0 = cfg.start
    N = cfg.paths
    chunk = 500
    sweeps, ends, dens, tol = [], [], [], []
    for k in range(0, N, chunk):
        idx = np.arange(k, min(k + chunk, N))
        path = fr.simulate_paths(base, x0, cfg.T, cfg.dt, cfg.seed, idx)
        st = fl.picard_flow_F_s(base, V, scaling, path, s, iterations=cfg.param("iterations", 6),
                                s0=cfg.s0)
        if st.s != s:
            raise fl.PicardDivergence(f"flow halved s to {st.s}")
        sweeps.append(st.sweeps)
        ends.append(hyp.distance(st.y[:, -1], path.x[:, -1]))
        dens.append(fl.flow_girsanov_density(st))
        tol.append(integrator_tolerance(base, path, cfg.seed))
    sweeps = np.max(np.array(sweeps), axis=0)
    ends = np.concatenate(ends)
    dens = np.concatenate(dens)
    tolerance = float(np.mean(np.concatenate(tol)))
    vel = start_velocity_errors(base, V, x0, s)
    factors = sweeps[:-1] / sweeps[1:]
    floor = 1e-13
    late = [f for i, f in enumerate(factors) if i >= 2 and sweeps[i + 1] > floor]
    dm, dse = float(np.mean(dens)), float(np.std(dens, ddof=1) / math.sqrt(dens.size))
    rows = [{"sweep": i + 1, "distance": d, "factor": "" if i == 0 else factors[i - 1]}
            for i, d in enumerate(sweeps)]
    summary = {"s": s, "endpoint_mean": float(np.mean(ends)), "endpoint_max": float(np.max(ends)),
               "integrator_tolerance": tolerance, "velocity_error_s": vel[0],
               "velocity_error_half_s": vel[1], "density_mean": dm, "density_se": dse}
    checks = {
        "contraction": all(f >= 2 for f in late),
        "endpoint": float(np.mean(ends)) < 5 * tolerance,
        "velocity": vel[1] < 0.6 * vel[0],
        "density": abs(dm - 1) < 3 * dse,
    }
    summary.update({f"check_{k}": v for k, v in checks.items()})
    return RunResult(rows, summary, all(checks.values()),
                     ("decay", {"series": {"sup change of (O, g)": sweeps}}))


def integrator_tolerance(model, path, seed):
    """Mean strong discretization error of the development at this dt.

    The Brownian path is refined by conditional midpoints and redeveloped;
    d(x_T^dt, x_T^{dt/2}) is the scale below which endpoint motion is not
    resolved.
    """
    dB = path.increments
    N, n, m = dB.shape
    gen = rng.rng_stream(seed + 104729, int(path.indices[0]))
    # midpoint of a variance-2t Brownian increment: mean half, variance dt/2
    eta = rng.standard_normals(gen, N * n * m).reshape(N, n, m) * math.sqrt(path.dt / 2)
    fine = np.empty((N, 2 * n, m))
    fine[:, 0::2] = 0.5 * dB + eta
    fine[:, 1::2] = 0.5 * dB - eta
    xT, _, _ = fr.develop(model, path.x[:, 0], path.u[:, 0], fine, store=False)
    return hyp.distance(xT, path.x[:, -1])


def start_velocity_errors(model, V, x0, s):
    """|(y_0^s - y_0)/s - V(y_0)| at s and s/2 (should halve)."""
    u0 = fr.initial_frame(model, x0)
    out = []
    for ss in (s, s / 2):
        x, _ = fl.flow_start(model, V, x0, u0, ss)
        out.append(float(model.norm(x0, (x - x0) / ss - V(x0))))
    return out


RUNNERS = {
    "oracle": run_oracle,
    "riccati": run_riccati,
    "drift": run_drift,
    "entropy": run_entropy,
    "exit-angles": run_exit_angles,
    "bridge": run_bridge,
    "girsanov-check": run_girsanov,
    "great-terms": run_great_terms,
    "entropy-derivative": run_entropy_derivative,
    "ibp-check": run_ibp_check,
    "flow-fs": run_flow_fs,
}


def run(cfg: ExperimentConfig) -> RunResult:
    return RUNNERS[cfg.subcommand](cfg)
