"""Closed-form ground truth on real hyperbolic space H^m (curvature -1).

Points live in the upper half-space chart x = (a_1, ..., a_{m-1}, y) with
y > 0 and metric |dx|^2 / y^2.  Tangent vectors are given by their chart
components.  Every routine broadcasts over leading axes.

Brownian motion throughout the package has generator Delta (not Delta/2),
so the kernels here are transition densities of a process whose driving
noise has quadratic variation 2 dt per coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

LN2 = np.log(2.0)


@dataclass(frozen=True)
class HyperbolicConstants:
    m: int
    drift: float
    entropy: float
    volume_entropy: float
    spray_divergence: float
    busemann_laplacian: float

    def chain_holds(self, tol: float = 1e-12) -> bool:
        l, h, v = self.drift, self.entropy, self.volume_entropy
        return l * l <= h + tol and h <= l * v + tol


def constants(m: int) -> HyperbolicConstants:
    """Drift, entropy and friends for H^m under the generator-Delta convention.

    The radial part of Delta is (m-1) coth r d/dr, so the escape rate is m-1;
    the stable tensor is -Id on the normal bundle, giving Div X = -(m-1).
    """
    if m < 2:
        raise ValueError("dimension must be at least 2")
    k = float(m - 1)
    return HyperbolicConstants(m, k, k * k, k, -k, k)


# ---------------------------------------------------------------------------
# kinematics


def _lnsinh(a):
    a = np.asarray(a, dtype=float)
    return a + np.log(-np.expm1(-2.0 * a)) - LN2


def distance(x, z):
    """Hyperbolic distance, stable for nearby points."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    q = np.sum((x - z) ** 2, axis=-1) / (4.0 * x[..., -1] * z[..., -1])
    return 2.0 * np.arcsinh(np.sqrt(q))


def norm(x, v):
    x = np.asarray(x, dtype=float)
    return np.linalg.norm(v, axis=-1) / x[..., -1]


def inner(x, v, w):
    x = np.asarray(x, dtype=float)
    return np.sum(np.asarray(v) * np.asarray(w), axis=-1) / x[..., -1] ** 2


def _geodesic_coefficients(x, v, t):
    """Shared pieces of the closed-form geodesic through x with velocity v.

    Returns the unit Euclidean direction (w, vm), arclength tt = t|v|, and
    D, S, C with D = cosh tt - vm sinh tt.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    y = x[..., -1]
    speed = np.linalg.norm(v, axis=-1)
    tt = np.asarray(t * speed / y, dtype=float)
    safe = speed > 0
    e = np.where(safe[..., None], v / np.where(safe, speed, 1.0)[..., None], 0.0)
    e[..., -1] = np.where(safe, e[..., -1], 1.0)
    w = e[..., :-1]
    vm = e[..., -1]
    w2 = np.sum(w * w, axis=-1)
    one_minus = np.where(vm > 0, w2 / np.where(vm > 0, 1.0 + vm, 1.0), 1.0 - vm)
    ep = np.exp(tt)
    em = np.exp(-tt)
    D = 0.5 * ((1.0 + vm) * em + one_minus * ep)
    ch1 = 2.0 * np.sinh(0.5 * tt) ** 2  # cosh tt - 1
    sh = np.sinh(tt)
    S = (vm * ch1 - sh) / D
    C = ch1 / D
    return y, w, vm, w2, tt, sh, D, S, C


def exp_map(x, v, t=1.0):
    """Point reached at parameter t along the geodesic with initial velocity v."""
    x = np.asarray(x, dtype=float)
    y, w, vm, w2, tt, sh, D, S, C = _geodesic_coefficients(x, v, t)
    out = np.empty(np.broadcast_shapes(x.shape, np.shape(v)))
    out[..., :-1] = x[..., :-1] + (y * sh / D)[..., None] * w
    out[..., -1] = y / D
    return out


def _rotate(E, w, w2, S, C):
    """Apply the in-plane rotation to unit-height vectors E (last axis = chart).

    E may carry one extra axis (a stack of frame vectors) beyond w.
    """
    extra = E.ndim - (w.ndim)
    if extra:
        w = w[..., None, :]
        S, C, w2 = S[..., None], C[..., None], w2[..., None]
    Eh = E[..., :-1]
    Em = E[..., -1]
    Ew = np.sum(Eh * w, axis=-1)
    out = np.empty_like(E)
    out[..., :-1] = Eh - (C * Ew + S * Em)[..., None] * w
    out[..., -1] = Em + S * Ew - w2 * C * Em
    return out


def exp_transport(x, v, frames=None, t=1.0):
    """Geodesic step with parallel transport.

    Parameters
    ----------
    x : (..., m) base points.
    v : (..., m) initial velocities.
    frames : optional (..., m, k) array of tangent vectors at x (columns).

    Returns
    -------
    (x_new, v_new, frames_new) where v_new is the velocity at parameter t.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    y, w, vm, w2, tt, sh, D, S, C = _geodesic_coefficients(x, v, t)
    xn = np.empty(np.broadcast_shapes(x.shape, v.shape))
    xn[..., :-1] = x[..., :-1] + (y * sh / D)[..., None] * w
    yn = y / D
    xn[..., -1] = yn
    vn = _rotate(v / y[..., None], w, w2, S, C) * yn[..., None]
    if frames is None:
        return xn, vn, None
    F = np.swapaxes(np.asarray(frames, dtype=float), -1, -2) / y[..., None, None]
    Fn = _rotate(F, w, w2, S, C) * yn[..., None, None]
    return xn, vn, np.swapaxes(Fn, -1, -2)


def log_map(x, z):
    """Initial velocity v at x with exp_map(x, v) = z."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    d = distance(x, z)
    xm, zm = x[..., -1], z[..., -1]
    sh = np.sinh(d)
    ratio = np.where(d > 1e-300, d / np.where(sh > 0, sh, 1.0), 1.0)
    out = np.empty(np.broadcast_shapes(x.shape, z.shape))
    out[..., :-1] = (z[..., :-1] - x[..., :-1]) * (xm * ratio / zm)[..., None]
    out[..., -1] = xm * ratio * (2.0 * np.sinh(0.5 * d) ** 2 + (zm - xm) / zm)
    return out


def transport(x, z, frames):
    """Parallel transport of frame columns along the geodesic from x to z."""
    return exp_transport(x, log_map(x, z), frames)[2]


def unit_direction_to_boundary(x, xi):
    """Unit tangent at x pointing to the boundary point xi (None means infinity)."""
    x = np.asarray(x, dtype=float)
    y = x[..., -1]
    if xi is None:
        out = np.zeros_like(x)
        out[..., -1] = y
        return out
    xi = np.broadcast_to(np.asarray(xi, dtype=float), x[..., :-1].shape)
    # invert about xi: the geodesic to xi is the image of a vertical ray.
    d = x.copy()
    d[..., :-1] -= xi
    r2 = np.sum(d * d, axis=-1)
    # the inversion about xi swaps xi and infinity; push e_m forward
    e = np.zeros_like(x)
    e[..., -1] = 1.0
    refl = e - 2.0 * (d[..., -1] / r2)[..., None] * d
    return refl * y[..., None]


# ---------------------------------------------------------------------------
# Busemann functions and Gromov products


def busemann(x0, z, xi=None):
    """Busemann function b_{x0,xi}(z); xi=None is the point at infinity."""
    x0 = np.asarray(x0, dtype=float)
    z = np.asarray(z, dtype=float)
    if xi is None:
        return -np.log(z[..., -1] / x0[..., -1])
    xi = np.asarray(xi, dtype=float)

    def height(p):
        return p[..., -1] / (np.sum((p[..., :-1] - xi) ** 2, axis=-1) + p[..., -1] ** 2)

    return -np.log(height(z) / height(x0))


def gromov_product(x, xi, eta):
    """Boundary Gromov product (xi|eta)_x in the half-space chart.

    xi or eta may be None for the point at infinity.
    """
    x = np.asarray(x, dtype=float)
    if xi is None and eta is None:
        raise ValueError("xi and eta coincide")
    if xi is None:
        xi, eta = eta, xi
    y = x[..., -1]
    xi = np.asarray(xi, dtype=float)

    def sq(p):
        return np.sum((x[..., :-1] - p) ** 2, axis=-1) + y * y

    if eta is None:
        return 0.5 * np.log(sq(xi) / (y * y))
    eta = np.asarray(eta, dtype=float)
    gap = np.sum(np.atleast_1d(xi - eta) ** 2, axis=-1)
    if np.any(gap == 0):
        raise ValueError("xi and eta coincide")
    return 0.5 * np.log(sq(xi) * sq(eta) / (y * y * gap))


def gromov_product_points(x, y, z):
    return 0.5 * (distance(x, y) + distance(x, z) - distance(y, z))


# ---------------------------------------------------------------------------
# heat kernels (generator Delta)


def log_heat_kernel_h3(t, r):
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    rs = np.where(r > 1e-8, r, 1.0)
    ratio = np.where(r > 1e-8, np.log(rs) - _lnsinh(rs), -r * r / 6.0)
    return -1.5 * np.log(4 * np.pi * t) + ratio - t - r * r / (4 * t)


def dlog_heat_kernel_h3(t, r):
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    rs = np.where(r > 1e-6, r, 1.0)
    lead = np.where(r > 1e-6, 1.0 / rs - 1.0 / np.tanh(rs), -r / 3.0)
    return lead - r / (2 * t)


@lru_cache(maxsize=8)
def _gauss_panels(n_panels: int, n_nodes: int):
    g, w = np.polynomial.legendre.leggauss(n_nodes)
    edges = np.linspace(0.0, 1.0, n_panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (b - a) * g + 0.5 * (a + b)).ravel()
    weights = (0.5 * (b - a) * w).ravel()
    return nodes, weights


def _ln_shc(b):
    b = np.asarray(b, dtype=float)
    big = b > 1e-4
    bs = np.where(big, b, 1.0)
    return np.where(big, _lnsinh(bs) - np.log(bs), b * b / 6.0)


def log_heat_kernel_h2(t, r, derivative=False, n_panels=8, n_nodes=16, drop=75.0):
    """ln p(t, r) on H^2, and optionally d/dr ln p.

    Uses the integral representation
        p = sqrt(2) e^{-t/4} (4 pi t)^{-3/2} int_r^inf s e^{-s^2/4t} / sqrt(cosh s - cosh r) ds
    with s = r + v^2, which removes the endpoint singularity, then composite
    Gauss-Legendre in v and a log-sum-exp.
    """
    t, r = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
    if np.any(t <= 0) or np.any(r < 0):
        raise ValueError("need t > 0 and r >= 0")
    span = np.minimum(np.sqrt(r * r + 4.0 * t * drop) - r, 2.0 * drop)
    vmax = np.sqrt(span)
    u, wq = _gauss_panels(n_panels, n_nodes)
    v = vmax[..., None] * u
    s = r[..., None] + v * v
    a = r[..., None] + 0.5 * v * v
    tt = t[..., None]
    L = LN2 + np.log(s) - 0.5 * _lnsinh(a) - 0.5 * _ln_shc(0.5 * v * v) - s * s / (4.0 * tt)
    lw = np.log(wq) + np.log(vmax)[..., None]
    lnI = logsumexp(L + lw, axis=-1)
    lnp = 0.5 * LN2 - 0.25 * t - 1.5 * np.log(4 * np.pi * t) + lnI
    if not derivative:
        return lnp
    dL = 1.0 / s - 0.5 / np.tanh(a) - s / (2.0 * tt)
    wts = np.exp(L + lw - lnI[..., None])
    dlnp = np.sum(wts * dL, axis=-1)
    # the v-substitution under-resolves the derivative as r -> 0, where it
    # is odd and linear in r; use the slope at r0 there
    r0 = 1e-3
    small = r < r0
    if np.any(small):
        d0 = log_heat_kernel_h2(t[small], np.full(np.count_nonzero(small), r0),
                                derivative=True, n_panels=n_panels,
                                n_nodes=n_nodes, drop=drop)[1]
        dlnp = np.array(dlnp)
        dlnp[small] = d0 * r[small] / r0
    return lnp, dlnp


def log_heat_kernel(m, t, r):
    if m == 2:
        return log_heat_kernel_h2(t, r)
    if m == 3:
        return log_heat_kernel_h3(t, r)
    raise ValueError("closed-form kernel available for m = 2, 3 only")


def dlog_heat_kernel(m, t, r):
    if m == 2:
        return log_heat_kernel_h2(t, r, derivative=True)[1]
    if m == 3:
        return dlog_heat_kernel_h3(t, r)
    raise ValueError("closed-form kernel available for m = 2, 3 only")


class KernelSlice:
    """Spline tables of ln p(t, .) and its radial derivative at a fixed t."""

    def __init__(self, m: int, t: float, r_max: float, n: int = 801):
        from scipy.interpolate import CubicSpline

        self.m, self.t, self.r_max = m, float(t), float(r_max)
        grid = np.linspace(0.0, r_max, n)
        if m == 2:
            lp, dlp = log_heat_kernel_h2(t, grid, derivative=True)
        else:
            lp, dlp = log_heat_kernel_h3(t, grid), dlog_heat_kernel_h3(t, grid)
        self._lp = CubicSpline(grid, lp)
        self._dlp = CubicSpline(grid, dlp)

    def log_p(self, r):
        return self._lp(np.minimum(r, self.r_max))

    def dlog_p(self, r):
        r = np.asarray(r, dtype=float)
        inside = r <= self.r_max
        out = self._dlp(np.minimum(r, self.r_max))
        if np.all(inside):
            return out
        exact = dlog_heat_kernel(self.m, self.t, r[~inside])
        out = np.array(out)
        out[~inside] = exact
        return out


def grad_log_heat_kernel(m, t, x, z, table: KernelSlice | None = None):
    """Chart gradient in x of ln p(t, x, z)."""
    r = distance(x, z)
    d = table.dlog_p(r) if table is not None else dlog_heat_kernel(m, t, r)
    v = log_map(x, z)  # length r, points to z
    rs = np.where(r > 0, r, 1.0)
    # grad r = -v/r as a vector; chart gradient of a function is y^2 times covector
    return np.where((r > 0)[..., None], -(d / rs)[..., None] * v, 0.0)


# ---------------------------------------------------------------------------
# self-validation of the kernel


def _radial_nodes(r_max, n_panels=64, n_nodes=16):
    u, w = _gauss_panels(n_panels, n_nodes)
    return u * r_max, w * r_max


def kernel_mass(t: float, m: int = 2, r_max: float | None = None) -> float:
    """int p(t, x, .) dVol; should equal 1."""
    if r_max is None:
        r_max = 2.0 * (m - 1) * t + 14.0 * np.sqrt(t) + 30.0
    r, w = _radial_nodes(r_max)
    lp = log_heat_kernel(m, t, r)
    if m == 2:
        lvol = np.log(2 * np.pi) + _lnsinh(np.maximum(r, 1e-300))
    else:
        lvol = np.log(4 * np.pi) + 2 * _lnsinh(np.maximum(r, 1e-300))
    return float(np.sum(w * np.exp(lp + lvol)))


def chapman_kolmogorov(s: float, t: float, r: float, n_theta: int = 128,
                       r_max: float | None = None) -> tuple[float, float]:
    """Return (p(s+t, r), int p(s, x, z) p(t, z, y) dVol(z)) on H^2."""
    if r_max is None:
        r_max = r + 2.0 * (s + t) + 14.0 * np.sqrt(s + t) + 30.0
    rho, w = _radial_nodes(r_max, n_panels=96)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    R, TH = np.meshgrid(rho, theta, indexing="ij")
    c = np.cosh(R) * np.cosh(r) - np.sinh(R) * np.sinh(r) * np.cos(TH)
    d2 = np.arccosh(np.maximum(c, 1.0))
    lp = log_heat_kernel_h2(s, R) + log_heat_kernel_h2(t, d2)
    inner_ = np.exp(lp).mean(axis=1) * 2 * np.pi
    total = float(np.sum(w * np.sinh(rho) * inner_))
    direct = float(np.exp(log_heat_kernel_h2(s + t, r)))
    return direct, total


def varadhan_ratio(t: float, r: float, m: int = 2) -> float:
    """-4 t ln p(t, r) / r^2, which tends to 1 as t -> 0."""
    return float(-4.0 * t * log_heat_kernel(m, t, r) / (r * r))
