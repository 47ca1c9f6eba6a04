"""Jacobi tensors, stable/unstable Riccati solutions and the spray divergence.

Along a unit geodesic c with a parallel orthonormal frame (e_1, ..., e_{m-1})
of c'^perp, write R(t)_ij = <R(e_j, c') c', e_i>.  Jacobi tensors solve
V'' + R V = 0 and U = V' V^-1 solves U' + U^2 + R = 0.  The finite-horizon
stable tensor has V(0) = I, V(s) = 0; near t = s one has U ~ -1/(s - t), so
we start at s - eps with U = -I/eps and integrate backwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry as geo


class RiccatiBlowUp(RuntimeError):
    """Riccati solution became non-finite before reaching t = 0."""


def normal_frame(model, x, v):
    """Orthonormal frame (v, e_1, ..., e_{m-1}); returns the full m x m frame."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    m = model.m
    v = v / model.norm(x, v)[..., None]
    base = np.broadcast_to(np.eye(m), x.shape[:-1] + (m, m)).copy()
    # choose the coordinate axes least aligned with v to complete the frame
    g = model.metric(x)
    align = np.abs(np.einsum("...i,...ij->...j", v, g)) / np.sqrt(np.einsum("...jj->...j", g))
    order = np.argsort(align, axis=-1)[..., ::-1]
    cols = np.take_along_axis(base, order[..., None, :], axis=-1)
    cols[..., :, 0] = v
    return geo.gram_schmidt(model, x, cols)


def riccati_mesh(s, eps=1e-3, h=0.05, ratio=1.05):
    """Times from s - eps down to 0: geometric near the blow-up, uniform beyond."""
    ts = [s - eps]
    step = eps * (ratio - 1.0)
    while ts[-1] > max(s - 1.0, 0.0):
        step = min(step * ratio, h)
        ts.append(max(ts[-1] - max(step, 1e-12), max(s - 1.0, 0.0)))
    t = ts[-1]
    n = int(math.ceil(t / h))
    ts.extend(np.linspace(t, 0.0, n + 1)[1:].tolist())
    return np.array(ts)


class CurvaturePath:
    """R(t) along the geodesic of (x, v) at requested times."""

    def __init__(self, model, x, v, times, frame=None):
        self.model = model
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        self.K = model.constant_curvature
        self.shape = x.shape[:-1]
        self.m = model.m
        if self.K is not None:
            return
        times = np.unique(np.asarray(times, dtype=float))
        u = normal_frame(model, x, v) if frame is None else frame
        vel = u[..., :, 0]
        self.times = times
        self.R = {}
        t_prev = 0.0
        xc, vc, uc = x, vel, u
        order = np.argsort(np.abs(times))
        for i in order:
            t = times[i]
            if t != t_prev:
                dt = t - t_prev
                xc, vc, uc = model.exp_transport(xc, vc, uc, t=dt, max_sub=0.02)
                t_prev = t
            self.R[float(t)] = _normal_curvature(model, xc, uc)

    def __call__(self, t):
        if self.K is not None:
            return self.K * np.broadcast_to(np.eye(self.m - 1), self.shape + (self.m - 1,) * 2)
        return self.R[float(t)]


def _normal_curvature(model, x, u):
    """R_ij = <R(e_j, c') c', e_i> from the full frame u = (c', e_1, ...)."""
    Rf = model.frame_curvature(x, u)  # [a, b, c, d] = (u^-1 R(u_a, u_b) u_c)_d
    # R(e_j, c')c' component i -> Rf[j, 0, 0, i]
    return np.swapaxes(Rf[..., 1:, 0, 0, 1:], -1, -2)


def _rk4_riccati(U, t0, t1, Rfun, sign=1.0):
    """One RK4 step of U' = -sign (U^2 + R) from t0 to t1."""
    h = t1 - t0
    tm = 0.5 * (t0 + t1)

    def f(U_, t):
        return -sign * (U_ @ U_ + Rfun(t))

    k1 = f(U, t0)
    k2 = f(U + 0.5 * h * k1, tm)
    k3 = f(U + 0.5 * h * k2, tm)
    k4 = f(U + h * k3, t1)
    return U + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass
class StableTensor:
    U: np.ndarray          # U(0) on the normal frame
    frame: np.ndarray      # full frame (v, e_1, ...)
    horizon: float

    @property
    def trace(self):
        return np.einsum("...ii->...", self.U)


def stable_tensor(model, x, v, s=20.0, eps=1e-3, h=0.05, check_curvature=True):
    """Finite-horizon stable tensor S'_{v,s}(0) = U(0)."""
    if s <= eps:
        raise ValueError("horizon must exceed the blow-up offset")
    x = np.asarray(x, dtype=float)
    frame = normal_frame(model, x, v)
    mesh = riccati_mesh(s, eps, h)
    mids = 0.5 * (mesh[1:] + mesh[:-1])
    path = CurvaturePath(model, x, frame[..., :, 0], np.concatenate([mesh, mids]), frame)
    if check_curvature and path.K is None:
        worst = max(float(np.max(np.linalg.eigvalsh(0.5 * (R + np.swapaxes(R, -1, -2)))))
                    for R in path.R.values())
        if worst > 0:
            raise RiccatiBlowUp(f"positive curvature {worst:.3e} along the geodesic")
    k = model.m - 1
    U = np.broadcast_to(-np.eye(k) / eps, x.shape[:-1] + (k, k)).copy()
    for t0, t1 in zip(mesh[:-1], mesh[1:]):
        U = _rk4_riccati(U, t0, t1, path)
        if not np.all(np.isfinite(U)):
            raise RiccatiBlowUp(f"Riccati solution blew up near t = {t1:.4f}")
    return StableTensor(U, frame, s)


def unstable_tensor(model, x, v, s=20.0, eps=1e-3, h=0.05):
    """Unstable tensor along v: minus the stable tensor of -v on the same normal frame."""
    st = stable_tensor(model, x, -np.asarray(v, dtype=float), s, eps, h)
    # the frame for -v is (-v, e_1, ...); the normal frame columns agree with those for v
    return StableTensor(-st.U, st.frame * np.concatenate([[-1.0], np.ones(model.m - 1)]), s)


def div_geodesic_spray(model, x, v, s=20.0, **kw):
    """Div of the spray toward the forward endpoint of v: trace of the stable tensor."""
    return stable_tensor(model, x, v, s, **kw).trace


def busemann_laplacian(model, x, v, s=20.0, **kw):
    return -div_geodesic_spray(model, x, v, s, **kw)


def stable_tensor_converged(model, x, v, s0=10.0, tol=1e-8, s_max=80.0, **kw):
    """Double the horizon until successive traces agree to tol; returns (tensor, estimate)."""
    prev = stable_tensor(model, x, v, s0, **kw)
    s = s0
    while s < s_max:
        s *= 2
        cur = stable_tensor(model, x, v, s, **kw)
        diff = float(np.max(np.abs(cur.trace - prev.trace)))
        if diff < tol:
            return cur, diff
        prev = cur
    return prev, diff


# ---------------------------------------------------------------------------
# geodesic flow tangent maps


def geodesic_flow_tangent(model, x, v, J0, J1, s, h=0.01):
    """Propagate Jacobi data (J, J') on the normal frame from 0 to s (s may be negative).

    Returns J(s), J'(s), and the Wronskian defect of the symplectic form.
    """
    x = np.asarray(x, dtype=float)
    frame = normal_frame(model, x, v)
    n = max(1, int(math.ceil(abs(s) / h)))
    ts = np.linspace(0.0, s, n + 1)
    mids = 0.5 * (ts[1:] + ts[:-1])
    path = CurvaturePath(model, x, frame[..., :, 0], np.concatenate([ts, mids]), frame)
    J = np.array(J0, dtype=float)
    P = np.array(J1, dtype=float)
    for t0, t1 in zip(ts[:-1], ts[1:]):
        J, P = _rk4_jacobi(J, P, t0, t1, path)
    return J, P


def _rk4_jacobi(J, P, t0, t1, Rfun):
    h = t1 - t0
    tm = 0.5 * (t0 + t1)

    def f(J_, P_, t):
        return P_, -np.einsum("...ij,...j->...i", Rfun(t), J_)

    a1, b1 = f(J, P, t0)
    a2, b2 = f(J + 0.5 * h * a1, P + 0.5 * h * b1, tm)
    a3, b3 = f(J + 0.5 * h * a2, P + 0.5 * h * b2, tm)
    a4, b4 = f(J + h * a3, P + h * b3, t1)
    return (J + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4), P + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4))


def wronskian(J, P, K, Q):
    """Symplectic pairing <J', K> - <J, K'> of two Jacobi fields."""
    return np.sum(P * K, axis=-1) - np.sum(J * Q, axis=-1)


def anosov_splitting(model, x, v, s=8.0, seed=0):
    """Recover stable/unstable slopes J'/J at (x, v) by power iteration (m = 2).

    Generic Jacobi data pushed forward from c(-s) aligns with the unstable
    line at c(0); data pulled back from c(s) aligns with the stable line.
    The slope J'/J does not depend on the orientation of the normal frame.
    Rates are the exponential growth/decay of |J| over [0, s].
    """
    if model.m != 2:
        raise NotImplementedError("splitting recovery implemented for surfaces")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    v = v / model.norm(x, v)
    JP = np.random.default_rng(seed).standard_normal(2)
    out = {}
    for label, sgn in (("unstable", -1.0), ("stable", 1.0)):
        xb, vb, _ = model.exp_transport(x, sgn * v, None, t=s, max_sub=0.02)
        J, P = geodesic_flow_tangent(model, xb, sgn * vb, JP[:1], JP[1:], -sgn * s)
        slope = float(P[0] / J[0])
        Jf, _ = geodesic_flow_tangent(model, x, v, np.ones(1), np.array([slope]), s)
        out[label] = {"slope": slope, "rate": math.log(abs(float(Jf[0]))) / s}
    return out
