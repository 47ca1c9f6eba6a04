"""The Upsilon and Y fields of a metric curve at a hyperbolic base.

Upsilon(v) is the v-normal part of P = d/dlam Gamma^lam(v, v) at lam = 0.
Y(v) integrates Upsilon backwards along the geodesic flow through its
unstable component.  On H^m a vertical vector w at v splits as
(w/2, w/2) + (-w/2, w/2) in (J, J') coordinates, and the unstable part
contracts by e^-s under the inverse flow, so

    Y(v) = 1/2 int_0^inf e^{-s} P_s^{-1} Upsilon(phi_s v) ds

with P_s parallel transport along the geodesic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import geometry as geo
from .. import hyperbolic as hyp
from .. import riccati as ric


class CurveSum(geo.MetricCurve):
    """Linear combination of metric curves sharing one base (tangent level only)."""

    def __init__(self, curves, weights):
        self.curves, self.weights = tuple(curves), tuple(float(w) for w in weights)
        self.base = self.curves[0].base
        self.m = self.base.m
        self.volume_preserving = all(c.volume_preserving for c in self.curves)

    def model(self, lam):
        if lam == 0:
            return self.base
        raise NotImplementedError("combined curves are defined at the tangent level")

    def tangent(self, x):
        return sum(w * c.tangent(x) for c, w in zip(self.curves, self.weights))

    def tangent_grad(self, x):
        return sum(w * c.tangent_grad(x) for c, w in zip(self.curves, self.weights))

    def dchristoffel_dlam(self, x, h=1e-4):
        return sum(w * c.dchristoffel_dlam(x) for c, w in zip(self.curves, self.weights))

    def initial_frame_derivative(self, x, U):
        return sum(w * c.initial_frame_derivative(x, U) for c, w in zip(self.curves, self.weights))


def dchristoffel_from_tangent(base, X, dX, x):
    """d/dlam Gamma at lam = 0 from the tangent tensor (Koszul formula, chart indices)."""
    g = base.metric(x)
    ginv = np.linalg.inv(g)
    G = base.christoffel(x)
    # covariant derivative nabla_l X_ij
    nX = dX - np.einsum("...pli,...pj->...lij", G, X) - np.einsum("...plj,...ip->...lij", G, X)
    low = 0.5 * (np.einsum("...ipj->...pij", nX) + np.einsum("...jpi->...pij", nX) - nX)
    return np.einsum("...kp,...pij->...kij", ginv, low)


def upsilon(curve, x, v, analytic=True):
    """Upsilon(v) at base point x for unit v (chart components).

    analytic=False uses centred differences of the Christoffel symbols of
    g^lam at lam = +-1e-4 (the oracle route).
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if analytic and isinstance(curve, geo.ConformalCurve):
        # d/dlam Gamma(v, v) = 2 <dphi, v> v - |v|_e^2 dphi on a conformally flat chart
        p = curve.phi.grad(x)
        P = 2 * np.sum(p * v, axis=-1)[..., None] * v - np.sum(v * v, axis=-1)[..., None] * p
        return P - curve.base.inner(x, P, v)[..., None] * v
    if analytic:
        dG = curve.dchristoffel_dlam(x)
    else:
        h = 1e-4
        dG = (curve.model(h).christoffel(x) - curve.model(-h).christoffel(x)) / (2 * h)
    P = np.einsum("...kij,...i,...j->...k", dG, v, v)
    base = curve.base
    return P - base.inner(x, P, v)[..., None] * v


@dataclass
class YValue:
    Y: np.ndarray
    tail_bound: float
    rate: float


_GL = np.polynomial.legendre.leggauss(8)


_RATE_CACHE = {}


def contraction_rate(m=2):
    """Measured unstable growth rate of the H^m geodesic flow (power iteration)."""
    if m not in _RATE_CACHE:
        base = geo.HyperbolicSpace(2)
        split = ric.anosov_splitting(base, np.array([0.0, 1.0]), np.array([1.0, 0.0]), s=8.0)
        _RATE_CACHE[m] = split["unstable"]["rate"]
    return _RATE_CACHE[m]


def curve_support(curve):
    """Bounding geodesic ball (center, radius) of the tangent support, or None if global."""
    if hasattr(curve, "curves"):
        parts = [curve_support(c) for c in curve.curves]
        if any(p is None for p in parts):
            return None
        balls = parts
    else:
        src = getattr(curve, "phi", None)
        if src is None:
            src = getattr(getattr(curve, "tensor", None), "bump", None)
        if src is None or not hasattr(src, "supports"):
            return None
        balls = src.supports()
    if not balls:
        return None
    c0 = np.asarray(balls[0][0], dtype=float)
    r = max(float(hyp.distance(c0, np.asarray(c, dtype=float))) + rad for c, rad in balls)
    return c0, r


def ray_hits_ball(x, v, center, radius):
    """Whether the forward geodesic ray (x, v), v unit, meets the closed ball B(center, radius).

    With d = d(x, c) and angle a between v and the direction to c, the ray's
    closest approach is d when a >= pi/2 and asinh(sinh d sin a) otherwise.
    """
    x = np.asarray(x, dtype=float)
    d = hyp.distance(x, center)
    w = hyp.log_map(x, np.broadcast_to(center, x.shape))
    nw = hyp.norm(x, w)
    cosa = hyp.inner(x, v, w) / np.where(nw > 0, nw, 1.0)
    sina = np.sqrt(np.clip(1.0 - cosa**2, 0.0, 1.0))
    near = np.where(cosa > 0, np.arcsinh(np.sinh(d) * sina), d)
    # small safety margin against rounding at tangency
    return (near <= radius + 1e-9) | (d <= radius)


def y_field(curve, x, v, S=15.0, sup_upsilon=None, support="auto", panels=32, budget=400_000):
    """Truncated Y(v) on an H^m base, with the tail bound from the measured rate.

    x, v have shape (..., m).  With a compact tangent support (center c,
    radius r) the integrand vanishes outside s in [d - r, d + r], d = d(x, c),
    so the Gauss panels are placed on that interval only; otherwise they cover
    [0, S].  sup_upsilon bounds |Upsilon| for the tail estimate; when absent it
    is taken from the sampled nodes.
    """
    if curve.base.constant_curvature != -1.0:
        raise ValueError("closed-form Y is implemented for hyperbolic bases")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    m = x.shape[-1]
    shape = x.shape[:-1]
    if support == "auto":
        support = curve_support(curve)
    n_nodes = panels * _GL[0].size
    K = int(np.prod(shape, dtype=int))
    if support is not None and K > 1:
        hit = ray_hits_ball(x, v, *support) & np.ones(shape, dtype=bool)
        if not np.all(hit):
            Y = np.zeros(shape + (m,))
            xb = np.broadcast_to(x, shape + (m,))[hit]
            vb = np.broadcast_to(v, shape + (m,))[hit]
            if xb.shape[0]:
                part = y_field(curve, xb, vb, S, sup_upsilon, support, panels, budget)
                Y[hit] = part.Y
                return YValue(Y, part.tail_bound, part.rate)
            return YValue(Y, 0.0, contraction_rate(m))
    if K * n_nodes > budget:
        # evaluate in blocks of base points to bound memory
        xf = np.broadcast_to(x, shape + (m,)).reshape(K, m)
        vf = np.broadcast_to(v, shape + (m,)).reshape(K, m)
        step = max(1, budget // n_nodes)
        parts = [y_field(curve, xf[i:i + step], vf[i:i + step], S, sup_upsilon, support, panels,
                         budget) for i in range(0, K, step)]
        Y = np.concatenate([p.Y for p in parts]).reshape(shape + (m,))
        return YValue(Y, max(p.tail_bound for p in parts), parts[0].rate)
    u, w = _GL
    rel = (np.arange(panels)[:, None] + 0.5 * (u + 1)).ravel() / panels
    relw = np.broadcast_to(0.5 * w / panels, (panels, u.size)).ravel()
    if support is None:
        a = np.zeros(shape)
        b = np.full(shape, float(S))
    else:
        d = hyp.distance(x, support[0])
        a = np.clip(d - support[1], 0.0, S)
        b = np.clip(d + support[1], 0.0, S)
    s = a[..., None] + (b - a)[..., None] * rel
    ws = (b - a)[..., None] * relw
    E = geo.orthonormal_frame(curve.base, x)
    n = rel.size
    xs = np.broadcast_to(x[..., None, :], shape + (n, m))
    vs = v[..., None, :] * s[..., None]
    Es = np.broadcast_to(E[..., None, :, :], shape + (n, m, m))
    xt, vt, Et = hyp.exp_transport(xs, vs, Es)
    vt = vt / np.where(s > 0, s, 1.0)[..., None]
    U = upsilon(curve, xt, vt)
    # pull back by parallel transport: coordinates in the transported orthonormal frame
    coef = curve.base.inner(xt[..., None, :], np.swapaxes(Et, -1, -2), U[..., None, :])
    weights = 0.5 * ws * np.exp(-s)
    Y = np.einsum("...s,...si,...ji->...j", weights, coef, E)
    sup = float(np.max(curve.base.norm(xt, U))) if sup_upsilon is None else sup_upsilon
    rate = contraction_rate(m)
    reach = float(np.max(b)) if support is None else (
        float(np.max(hyp.distance(x, support[0]))) + support[1])
    tail = 0.0 if reach <= S and support is not None else 0.5 * sup * math.exp(-rate * S) / rate
    return YValue(Y, tail, rate)
