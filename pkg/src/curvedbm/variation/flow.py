"""Path-space flows that move the start point of a Brownian path and pin its end.

For a path y developed from (y_0, u_0) by the driving increments dB, a
vector field V and a scaling s(t) with s(0) = 1, s(T) = 0, the flow F^s
moves y_0 along V while the variation field along the path stays
s(t) times the parallel transport of V(y_0).  In driving coordinates

    d alpha^s = O^s dB + g^s dt,   dO/ds = K O,   dg/ds = K g + g',

with K_t = -int_0^t R(o d alpha, s c), c = u_0^-1 V(y_0) in frame
coordinates and kappa the (constant) sectional curvature.  Pathwise the
flow uses the midpoint (Stratonovich) sum for K with g' = s'(t) c, which
pins the endpoint for any driving path.  The law of alpha^s is that of a
rotated Brownian motion with the Ito drift solving the same equation with
g' = s'(t) c + kappa (m - 1) s(t) c; that drift enters the density.  The
s-ODE is solved on an s-grid by Picard sweeps with the trapezoid rule and
matrix exponentials, so O stays orthogonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .. import frames as fr
from .. import geometry as geo


class PicardDivergence(ArithmeticError):
    """Picard sweeps failed to contract; reduce s."""


@dataclass(frozen=True)
class CubicScaling:
    """s(t) = (1 - t/T)^2 (1 + 2t/T): s(0) = 1, s(T) = 0, s'(0) = s'(T) = 0."""

    T: float

    def __call__(self, t):
        r = np.asarray(t, dtype=float) / self.T
        return (1 - r) ** 2 * (1 + 2 * r)

    def derivative(self, t):
        r = np.asarray(t, dtype=float) / self.T
        return -6 * r * (1 - r) / self.T


@dataclass(frozen=True)
class LinearScaling:
    """s(t) = 1 - t/T, the simplest admissible choice."""

    T: float

    def __call__(self, t):
        return 1 - np.asarray(t, dtype=float) / self.T

    def derivative(self, t):
        return np.full(np.shape(t), -1.0 / self.T)


def check_scaling(scaling, T, tol=1e-12):
    if abs(float(scaling(0.0)) - 1) > tol or abs(float(scaling(T))) > tol:
        raise ValueError("scaling must satisfy s(0) = 1 and s(T) = 0")


@dataclass
class VariationFlowState:
    s: float
    alpha: np.ndarray           # (N, n, m) driving increments of the flowed path
    O: np.ndarray               # (N, n, m, m)
    g: np.ndarray               # (N, n, m) pathwise drift (per unit time)
    g_ito: np.ndarray           # (N, n, m) Ito drift of the flowed increments
    increments: np.ndarray      # the original driving increments dB
    y: np.ndarray               # (N, n + 1, m) flowed path
    u: np.ndarray               # (N, n + 1, m, m) flowed frames
    c: np.ndarray               # (N, m) frame coordinates of V at the start point
    dt: float
    sweeps: list = field(default_factory=list)

    @property
    def orthogonality_defect(self):
        m = self.O.shape[-1]
        return float(np.max(np.abs(np.einsum("...ji,...jk->...ik", self.O, self.O) - np.eye(m))))

    @property
    def contraction_factors(self):
        d = np.asarray(self.sweeps)
        with np.errstate(divide="ignore", invalid="ignore"):
            return d[:-1] / d[1:]


def flow_start(model, V, x0, u0, s, steps=8):
    """Move (x0, u0) along the integral curve of V for time s with parallel frames (RK4)."""
    x = np.array(x0, dtype=float)
    u = np.array(u0, dtype=float)
    if s == 0:
        return x, u
    h = s / steps

    def rhs(x_, u_):
        v = V(x_)
        G = model.christoffel(x_)
        return v, -np.einsum("...kij,...i,...ja->...ka", G, v, u_)

    for _ in range(steps):
        a1, b1 = rhs(x, u)
        a2, b2 = rhs(x + 0.5 * h * a1, u + 0.5 * h * b1)
        a3, b3 = rhs(x + 0.5 * h * a2, u + 0.5 * h * b2)
        a4, b4 = rhs(x + h * a3, u + h * b3)
        x = x + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        u = u + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
    return x, geo.gram_schmidt(model, x, u)


def _k_and_drift(kappa, m, alpha, sc, sp, c):
    """Midpoint K_k, the pathwise drift s'c and the Ito drift (constant curvature)."""
    z = sc[None, :, None] * c[:, None, :]                            # (N, n, m)
    # R(a, b) w = kappa (<b, w> a - <a, w> b) as a matrix acting on w
    R = kappa * (alpha[..., :, None] * z[..., None, :] - z[..., :, None] * alpha[..., None, :])
    K = -(np.cumsum(R, axis=1) - 0.5 * R)
    gp = sp[None, :, None] * c[:, None, :]
    return K, gp, gp + kappa * (m - 1) * z


def picard_flow_F_s(model, V, scaling, path: fr.PathBundle, s, iterations=6, s_steps=4,
                    s0=0.1, develop=True):
    """Picard sweeps for (O^s, g^s) and the flowed path; s is halved on non-contraction.

    `path` must store x and u.  Returns a VariationFlowState; the sweep
    distances (sup over paths, times and s-grid of the change in O and g)
    are kept in state.sweeps.
    """
    kappa = model.constant_curvature
    if kappa is None:
        raise NotImplementedError("the flow assumes a parallel curvature tensor (constant curvature)")
    if abs(s) > s0 + 1e-15:
        raise ValueError(f"|s| = {abs(s)} exceeds s0 = {s0}")
    dB = path.increments
    N, n, m = dB.shape
    dt = path.dt
    T = n * dt
    check_scaling(scaling, T)
    tm = (np.arange(n) + 0.5) * dt
    sc = scaling(tm)
    sp = scaling.derivative(tm)
    x0, u0 = path.x[:, 0], path.u[:, 0]
    grid = np.linspace(0.0, s, s_steps + 1)
    ds = grid[1] - grid[0] if s_steps else 0.0
    starts = [flow_start(model, V, x0, u0, sj) for sj in grid]
    cs = []
    for xj, uj in starts:
        v = V(xj)
        uinv = np.einsum("...ia,...ij->...aj", uj, model.metric(xj))
        cs.append(np.einsum("...aj,...j->...a", uinv, v))
    I = np.broadcast_to(np.eye(m), (N, n, m, m))
    O = [np.array(I) for _ in grid]
    g = [np.zeros((N, n, m)) for _ in grid]
    gi = [np.zeros((N, n, m)) for _ in grid]
    dists = []
    if s != 0:
        for sweep in range(iterations):
            Ks, gps, gis = [], [], []
            for j in range(len(grid)):
                alpha = np.einsum("...ij,...j->...i", O[j], dB) + g[j] * dt
                K, gp, gq = _k_and_drift(kappa, m, alpha, sc, sp, cs[j])
                Ks.append(K)
                gps.append(gp)
                gis.append(gq)
            zero = np.zeros((N, n, m))
            On, gn, gin = [np.array(I)], [zero], [zero]
            for j in range(s_steps):
                E = _expm_batch(0.5 * ds * (Ks[j] + Ks[j + 1]))
                for src, dst in ((gps, gn), (gis, gin)):
                    gh = dst[j] + 0.5 * ds * src[j]
                    dst.append(np.einsum("...ij,...j->...i", E, gh) + 0.5 * ds * src[j + 1])
                On.append(np.einsum("...ij,...jk->...ik", E, On[j]))
            dist = max(float(np.max(np.abs(a - b))) for a, b in zip(On + gn, O + g))
            dists.append(dist)
            O, g, gi = On, gn, gin
            if sweep >= 3 and dists[-2] > 0 and dists[-1] > 0.5 * dists[-2] and dists[-1] > 1e-13:
                if abs(s) / 2 < 1e-6:
                    raise PicardDivergence("no contraction even for tiny s")
                return picard_flow_F_s(model, V, scaling, path, s / 2, iterations, s_steps,
                                       s0, develop)
    alpha = np.einsum("...ij,...j->...i", O[-1], dB) + g[-1] * dt
    xs_, us_ = starts[-1]
    if develop:
        y, u, _ = fr.develop(model, xs_, us_, alpha, store=True)
    else:
        y, u = None, None
    return VariationFlowState(s, alpha, O[-1], g[-1], gi[-1], dB, y, u, cs[-1], dt, dists)


def _expm_batch(A):
    """exp of antisymmetric matrices: closed form for m = 2, Rodrigues for m = 3."""
    m = A.shape[-1]
    if m == 2:
        th = A[..., 1, 0]
        c, s = np.cos(th), np.sin(th)
        return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    if m == 3:
        w = np.stack([A[..., 2, 1], A[..., 0, 2], A[..., 1, 0]], -1)
        th = np.linalg.norm(w, axis=-1)[..., None, None]
        safe = np.where(th > 1e-12, th, 1.0)
        a = np.where(th > 1e-12, np.sin(safe) / safe, 1.0 - th**2 / 6)
        b = np.where(th > 1e-12, (1 - np.cos(safe)) / safe**2, 0.5 - th**2 / 24)
        return np.eye(3) + a * A + b * (A @ A)
    flat = A.reshape(-1, m, m)
    return np.stack([expm(a) for a in flat]).reshape(A.shape)


def flow_girsanov_density(state: VariationFlowState, log=False):
    """exp(-1/2 int <g, O dB> - 1/4 int |g|^2 dt) with the Ito drift g.

    This is the density of the unflowed law with respect to the flowed law,
    pulled back through the flow, so E[Phi(alpha^s) D] = E[Phi(B)].
    """
    dW = np.einsum("...ij,...j->...i", state.O, state.increments)
    g = state.g_ito
    lg = (-0.5 * np.sum(g * dW, axis=(-1, -2)) - 0.25 * np.sum(g ** 2, axis=(-1, -2)) * state.dt)
    return lg if log else np.exp(lg)


def reverse_path(path: fr.PathBundle) -> fr.PathBundle:
    """Time reversal of a stored geodesic-step path (exact for the scheme)."""
    inc = -path.increments[:, ::-1]
    return fr.PathBundle(path.dt, path.T, path.seed, inc, path.indices, path.x[:, ::-1],
                         path.u[:, ::-1], meta={"reversed": True})


def half_plane_fields():
    """Orthonormal fields y d/dx and y d/dy on the H^2 half-plane, with their divergences."""
    def V1(x):
        out = np.zeros_like(np.asarray(x, dtype=float))
        out[..., 0] = x[..., 1]
        return out

    def V2(x):
        out = np.zeros_like(np.asarray(x, dtype=float))
        out[..., 1] = x[..., 1]
        return out

    def div1(x):
        return np.zeros(np.shape(x)[:-1])

    def div2(x):
        return -np.ones(np.shape(x)[:-1])

    return [(V1, div1), (V2, div2)]


def divergence_fd(model, V, x, h=1e-5):
    """(1/sqrt g) d_i(sqrt g V^i) by central differences."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1])
    for i in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[i] = h
        a = model.volume_density(x + e) * V(x + e)[..., i]
        b = model.volume_density(x - e) * V(x - e)[..., i]
        out += (a - b) / (2 * h)
    return out / model.volume_density(x)


__all__ = ["CubicScaling", "LinearScaling", "VariationFlowState", "picard_flow_F_s",
           "flow_girsanov_density", "flow_start", "reverse_path", "half_plane_fields",
           "divergence_fd", "PicardDivergence"]
