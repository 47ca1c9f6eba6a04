"""Two-estimator check of the heat-kernel integration by parts on H^2.

The left side d/dlam E f(x_T^lam) is a coupled central difference in lam.
The right side is the pathwise weight E[f(x_T) phi] obtained from the
lam-derivative Z = u_T z_T of the endpoint: writing Z = sum_i H_i V_i in an
orthonormal field frame and flowing the time-reversed path, whose start is
x_T and whose end x_0 is pinned, gives

    phi = sum_i H_i (rho_i - Div V_i(x_T)) - dH_i/ds,

with rho_i the score of the flowed law (the Ito drift derivative integrated
against the reversed increments) and dH_i/ds the derivative of H_i along
the flow.  The reversed path starts from the volume measure, so no heat-
kernel gradient enters.  E<grad f(x_T), Z> is reported as a third route and
E[f <Z, grad ln p>] as a diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .. import frames as fr
from .. import geometry as geo
from .. import hyperbolic as hyp
from .. import parallel
from ..estimators import mean_se
from . import flow as fl
from . import lambda_frame as lf


@dataclass(frozen=True)
class GaussianWindow:
    """f(x) = exp(-(cosh d(x, c) - 1) / width), smooth and bounded on H^m."""

    center: tuple
    width: float = 1.0

    def _q(self, x):
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.center, dtype=float)
        D = x - c
        s = np.sum(D * D, axis=-1)
        a, y = c[-1], x[..., -1]
        q = s / (2 * a * y)
        dq = D / (a * y)[..., None]
        dq[..., -1] -= s / (2 * a * y * y)
        return q, dq

    def value(self, x):
        return np.exp(-self._q(x)[0] / self.width)

    def grad(self, x):
        """Chart partial derivatives."""
        q, dq = self._q(x)
        return -(np.exp(-q / self.width) / self.width)[..., None] * dq


@dataclass(frozen=True)
class Translated:
    """f(x - shift) on the half-plane chart (horizontal shifts are isometries)."""

    f: object
    shift: tuple

    def value(self, x):
        return self.f.value(np.asarray(x, dtype=float) - np.asarray(self.shift))

    def grad(self, x):
        return self.f.grad(np.asarray(x, dtype=float) - np.asarray(self.shift))


@dataclass
class IBPResult:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    direct: float
    direct_se: float
    kernel_term: float
    kernel_term_se: float
    n: int
    T: float
    dt: float
    seed: int
    extra: dict = field(default_factory=dict)

    @property
    def combined_se(self):
        return math.hypot(self.lhs_se, self.rhs_se)

    @property
    def z_score(self):
        se = self.combined_se
        return abs(self.lhs - self.rhs) / se if se > 0 else (0.0 if self.lhs == self.rhs else math.inf)

    def passed(self, z=3.0):
        return self.z_score < z

    def nonzero(self, z=3.0):
        """Both sides resolved away from zero."""
        return abs(self.lhs) > z * self.lhs_se and abs(self.rhs) > z * self.rhs_se

    def required_n(self, z=3.0):
        """Paths needed for the smaller side to be resolved at z sigma."""
        mag = min(abs(self.lhs), abs(self.rhs))
        if mag == 0:
            return math.inf
        se = max(self.lhs_se, self.rhs_se) * math.sqrt(self.n)
        return int(math.ceil((z * se / mag) ** 2))

    def as_dict(self):
        d = {k: getattr(self, k) for k in ("lhs", "lhs_se", "rhs", "rhs_se", "direct", "direct_se",
                                            "kernel_term", "kernel_term_se", "n", "T", "dt", "seed")}
        d.update(combined_se=self.combined_se, z_score=self.z_score, passed=self.passed(),
                 nonzero=self.nonzero(), **self.extra)
        return d


def _vec(a, b):
    return np.einsum("...ij,...j->...i", a, b)


def _h_along(curve, xs, us, inc, fields):
    """H_i = <u_T z_T, V_i(x_T)> for the path (xs, us, inc) started at xs[:, 0]."""
    Z0 = curve.initial_frame_derivative(xs[:, 0], us[:, 0])
    m = xs.shape[-1]
    tf = fr.tangent_flow(curve.base, xs, us, inc, np.zeros(m), Z0,
                         extra=lf.lambda_forcing(curve))
    xT = xs[:, -1]
    Z = _vec(us[:, -1], tf.z)
    return Z, np.stack([curve.base.inner(xT, Z, V(xT)) for V, _ in fields], -1)


def ito_drift_derivative(kappa, m, scaling, c, n, dt):
    """d/ds at s = 0 of the Ito drift: s'(t) c + kappa (m - 1) s(t) c on the step midpoints."""
    tm = (np.arange(n) + 0.5) * dt
    w = scaling.derivative(tm) + kappa * (m - 1) * scaling(tm)
    return w[None, :, None] * c[:, None, :]


def _chunk_ibp(indices, curve, f, x0, T, dt, seed, lam, h, scaling, lhs_offset,
               iterations, table, max_sub):
    base = curve.base
    m = base.m
    kappa = base.constant_curvature
    fields = fl.half_plane_fields()
    # right side: primal paths and their reversal
    b = fr.simulate_paths(base, x0, T, dt, seed, indices)
    xT = b.x[:, -1]
    fT = f.value(xT)
    Z, H = _h_along(curve, b.x, b.u, b.increments, fields)
    direct = np.sum(f.grad(xT) * Z, axis=-1)
    rb = fl.reverse_path(b)
    n = b.n_steps
    weight = np.zeros(len(indices))
    parts = {}
    for i, (V, div) in enumerate(fields):
        uinv = np.einsum("...ia,...ij->...aj", rb.u[:, 0], base.metric(xT))
        c = _vec(uinv, V(xT))
        gp = ito_drift_derivative(kappa, m, scaling, c, n, dt)
        rho = 0.5 * np.sum(gp * rb.increments, axis=(-1, -2))
        dH = []
        for s in (h, -h):
            st = fl.picard_flow_F_s(base, V, scaling, rb, s, iterations=iterations, s_steps=1,
                                    s0=max(h, 0.1))
            if st.s != s:
                raise fl.PicardDivergence("flow step was halved inside the IBP weight")
            xs, us, inc = st.y[:, ::-1], st.u[:, ::-1], -st.alpha[:, ::-1]
            dH.append(_h_along(curve, xs, us, inc, fields)[1][:, i])
        dHds = (dH[0] - dH[1]) / (2 * h)
        term = H[:, i] * (rho - div(xT)) - dHds
        parts[f"score_{i}"] = H[:, i] * rho
        parts[f"flow_{i}"] = -dHds
        weight += term
    # diagnostic: E[f <Z, grad ln p(T, x0, .)>] at the endpoint
    glp = hyp.grad_log_heat_kernel(m, T, xT, np.broadcast_to(x0, xT.shape), table)
    kern = fT * base.inner(xT, Z, glp / xT[..., -1:] ** 2)
    # left side on an independent stream
    lb = fr.simulate_paths(base, x0, T, dt, seed + lhs_offset, indices, store=False)
    fd = []
    for sgn in (1.0, -1.0):
        model = curve.model(sgn * lam)
        if hasattr(model, "max_sub"):
            model.max_sub = max_sub
        u0 = geo.gram_schmidt(model, np.asarray(x0, dtype=float), fr.initial_frame(base, x0))
        xl, _, _ = fr.develop(model, x0, u0, lb.increments, store=False)
        fd.append(f.value(xl))
    out = {"lhs": (fd[0] - fd[1]) / (2 * lam), "rhs": fT * weight, "direct": direct,
           "kernel": kern}
    out.update({k: fT * v for k, v in parts.items()})
    return out


def ibp_check(curve, f, x0=(0.0, 1.0), T=2.0, dt=0.02, N=100_000, seed=0, lam=1e-3, h=1e-2,
              scaling=None, iterations=4, workers=1, lhs_seed_offset=1_000_003,
              max_sub=0.25):
    """Both sides of the integration by parts with standard errors (H^2 only)."""
    if curve.base.m != 2 or curve.base.constant_curvature is None:
        raise NotImplementedError("the check uses the half-plane orthonormal fields")
    x0 = np.asarray(x0, dtype=float)
    scaling = scaling if scaling is not None else fl.CubicScaling(T)
    r_max = 12.0 + 4 * T
    table = hyp.KernelSlice(2, T, r_max)
    fn = partial(_chunk_ibp, curve=curve, f=f, x0=x0, T=T, dt=dt, seed=seed, lam=lam, h=h,
                 scaling=scaling, lhs_offset=lhs_seed_offset, iterations=iterations,
                 table=table, max_sub=max_sub)
    res = parallel.map_paths(fn, N, workers)
    cols = {k: parallel.concat(res, k) for k in res[0]}
    stats = {k: mean_se(v) for k, v in cols.items()}
    extra = {k: v[0] for k, v in stats.items() if k.startswith(("score", "flow"))}
    extra["lam"], extra["h"] = lam, h
    return IBPResult(*stats["lhs"], *stats["rhs"], *stats["direct"], *stats["kernel"], N, T, dt,
                     seed, extra)


__all__ = ["GaussianWindow", "Translated", "IBPResult", "ibp_check", "ito_drift_derivative"]
