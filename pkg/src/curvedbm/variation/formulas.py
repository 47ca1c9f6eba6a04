"""First derivatives of drift and entropy at a hyperbolic base.

At H^m the harmonic measure on the unit tangent bundle is normalized
Liouville measure, the spray X is the unit vector v itself and its
divergence is the trace of the stable tensor.  Integrals over the compact
quotient are replaced by averages over a geodesic ball (window) around the
support of the metric perturbation, with fiber quadrature over S_xM.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import geometry as geo
from .. import hyperbolic as hyp
from .. import riccati as ric
from .fields import curve_support, y_field


# ---------------------------------------------------------------------------
# quadrature


@dataclass
class Window:
    center: np.ndarray
    radius: float
    x: np.ndarray          # (K, m) nodes
    w: np.ndarray          # (K,) dVol weights

    @property
    def volume(self):
        return float(np.sum(self.w))


def _unit_sphere(m, n):
    """Directions and normalized weights on S^{m-1}: trapezoid (m=2), Gauss x trapezoid (m=3)."""
    if m == 2:
        th = 2 * np.pi * (np.arange(n) + 0.5) / n
        return np.stack([np.cos(th), np.sin(th)], axis=-1), np.full(n, 1.0 / n)
    if m == 3:
        k = max(2, n // 2)
        c, wc = np.polynomial.legendre.leggauss(k)
        ph = 2 * np.pi * (np.arange(n) + 0.5) / n
        s = np.sqrt(1 - c**2)
        d = np.stack([s[:, None] * np.cos(ph), s[:, None] * np.sin(ph),
                      np.broadcast_to(c[:, None], (k, n))], axis=-1).reshape(-1, 3)
        w = (wc[:, None] / 2 * np.full(n, 1.0 / n)).ravel()
        return d, w
    raise NotImplementedError("fiber quadrature for m = 2, 3")


def window(m, center, radius, n_dir=32, panel=0.25, n_gauss=8, breaks=()):
    """Geodesic-polar quadrature of the ball B(center, radius) in H^m.

    Radial panels also break at `breaks` (e.g. support radii of radial bumps),
    where the integrand is smooth but flat to all orders.
    """
    center = np.asarray(center, dtype=float)
    edges = [0.0, radius] + [b for b in breaks if 0.0 < b < radius]
    edges = np.unique(np.round(edges, 12))
    refined = [edges[0]]
    for a, b in zip(edges[:-1], edges[1:]):
        k = max(1, int(math.ceil((b - a) / panel)))
        refined.extend(np.linspace(a, b, k + 1)[1:])
    edges = np.array(refined)
    u, wu = np.polynomial.legendre.leggauss(n_gauss)
    r = (0.5 * (edges[1:] - edges[:-1])[:, None] * (u + 1) + edges[:-1, None]).ravel()
    wr = (0.5 * (edges[1:] - edges[:-1])[:, None] * wu).ravel()
    d, wd = _unit_sphere(m, n_dir)
    area = 2 * np.pi if m == 2 else 4 * np.pi
    v = d * center[-1]
    x = hyp.exp_map(np.broadcast_to(center, (r.size, d.shape[0], m)), r[:, None, None] * v[None])
    w = (wr * np.sinh(r) ** (m - 1))[:, None] * (area * wd)[None, :]
    return Window(center, radius, x.reshape(-1, m), w.ravel())


def default_window(curve, margin=1.0, radius=None, center=None, **kw):
    sup = curve_support(curve)
    m = curve.base.m
    if center is None:
        center = sup[0] if sup is not None else np.eye(m)[-1]
    if radius is None:
        if sup is None:
            raise ValueError("a window radius is needed for globally supported perturbations")
        radius = float(hyp.distance(np.asarray(center, float), sup[0])) + sup[1] + margin
    kw.setdefault("breaks", _support_breaks(curve, center))
    return window(m, center, radius, **kw)


def _support_breaks(curve, center):
    """Distances from the window center at which bump profiles switch off."""
    if hasattr(curve, "curves"):
        return tuple(b for c in curve.curves for b in _support_breaks(c, center))
    src = getattr(curve, "phi", None)
    if src is None:
        src = getattr(getattr(curve, "tensor", None), "bump", None)
    if src is None or not hasattr(src, "supports"):
        return ()
    out = []
    for c, r in src.supports():
        d = float(hyp.distance(np.asarray(center, float), np.asarray(c, float)))
        out.extend([d - r, d + r] if d > 1e-12 else [r])
    return tuple(out)


def fiber(model, x, n):
    """Unit vectors at x (shape (K, F, m)) and normalized fiber weights (F,)."""
    d, w = _unit_sphere(model.m, n)
    E = geo.orthonormal_frame(model, x)
    return np.einsum("...ij,fj->...fi", E, d), w


# ---------------------------------------------------------------------------
# tensor calculus for the tangent X


def covariant_tangent(base, X, dX, x):
    """nabla_k X_ij as [..., k, i, j]."""
    G = base.christoffel(x)
    return dX - np.einsum("...pki,...pj->...kij", G, X) - np.einsum("...pkj,...ip->...kij", G, X)


def trace_gradient(base, X, dX, x):
    """Chart differential d(tr_g X) as [..., k]."""
    g = base.metric(x)
    ginv = np.linalg.inv(g)
    dg = base.dmetric(x)
    dginv = -np.einsum("...ip,...kpq,...qj->...kij", ginv, dg, ginv)
    return np.einsum("...ij,...kij->...k", ginv, dX) + np.einsum("...kij,...ij->...k", dginv, X)


def tensor_norms(base, X, nX, x):
    """Pointwise g-norms of X and nabla X."""
    ginv = np.linalg.inv(base.metric(x))
    n0 = np.einsum("...ij,...kl,...ik,...jl->...", X, X, ginv, ginv)
    n1 = np.einsum("...aij,...bkl,...ab,...ik,...jl->...", nX, nX, ginv, ginv, ginv)
    return np.sqrt(np.abs(n0)), np.sqrt(np.abs(n1))


def c1_norm(curve, win: Window):
    """sup over the window nodes of |X| and |nabla X| (g-norms)."""
    x = win.x
    X = curve.tangent(x)
    nX = covariant_tangent(curve.base, X, curve.tangent_grad(x), x)
    n0, n1 = tensor_norms(curve.base, X, nX, x)
    return float(max(np.max(n0), np.max(n1)))


# ---------------------------------------------------------------------------
# drift formula


@dataclass
class GreatTerms:
    terms: dict                 # window averages of (I), (II), (III), (IV)
    total: float
    iv_direct: float            # -int Div Y over the window (flux-affected diagnostic)
    c1_norm: float
    drift: float
    window_radius: float
    fiber_change: float         # change of (I)-(IV) under fiber order doubling
    tail_bound: float
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        return asdict(self)


def _pointwise_terms(curve, x, v, div_spray, Y):
    base = curve.base
    X = curve.tangent(x)
    dX = curve.tangent_grad(x)
    nX = covariant_tangent(base, X, dX, x)
    dtr = trace_gradient(base, X, dX, x)
    Xvv = np.einsum("...ij,...fi,...fj->...f", X, v, v)
    t1 = -0.5 * np.einsum("...k,...fk->...f", dtr, v)
    t2 = 0.5 * Xvv * div_spray
    t3 = 0.5 * np.einsum("...kij,...fk,...fi,...fj->...f", nX, v, v, v)
    # integrated by parts against the harmonic density: -Div Y -> <Y, l X>
    ell = -div_spray
    t4 = ell * base.inner(x[..., None, :], Y, v)
    return t1, t2, t3, t4


def _fiber_average(curve, win, n_fiber, S, horizon):
    base = curve.base
    v, fw = fiber(base, win.x, n_fiber)
    xb = np.broadcast_to(win.x[:, None, :], v.shape)
    div = ric.div_geodesic_spray(base, xb, v, horizon)
    Yv = y_field(curve, xb, v, S)
    terms = _pointwise_terms(curve, win.x, v, div, Yv.Y)
    avgs = [float(np.sum(win.w * (t @ fw)) / win.volume) for t in terms]
    return avgs, Yv.tail_bound, div


def _direct_div_y(curve, win, n_fiber, S, h=1e-4):
    """Window average of -Div_x Y(x, xi) with xi the forward endpoint of v (m = 2)."""
    base = curve.base
    if base.m != 2:
        raise NotImplementedError("direct Div Y route implemented on H^2")
    v, fw = fiber(base, win.x, n_fiber)
    xb = np.broadcast_to(win.x[:, None, :], v.shape)
    xi = geodesic_endpoint(xb, v)
    total = np.zeros(v.shape[:-1])
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        acc = []
        for sgn in (1.0, -1.0):
            xp = xb + sgn * e
            vp = hyp.unit_direction_to_boundary(xp, xi)
            Yp = y_field(curve, xp, vp, S).Y
            acc.append(base.volume_density(xp) * Yp[..., k])
        total += (acc[0] - acc[1]) / (2 * h)
    div = total / base.volume_density(xb)
    return -float(np.sum(win.w * (div @ fw)) / win.volume)


def geodesic_endpoint(x, v):
    """Forward boundary point of the geodesic (x, v) in the H^2 half-plane."""
    y = x[..., 1]
    a, b = v[..., 0], v[..., 1]
    if np.any(a == 0):
        raise ValueError("vertical direction has its endpoint at infinity")
    tau = y * b / (a * a)
    c = x[..., 0] + tau * a
    rho = np.hypot(x[..., 0] - c, y)
    return (c + rho * np.sign(a))[..., None]


def formula_great_terms(curve, n_fiber=16, S=15.0, horizon=20.0, win: Window | None = None,
                        direct=True, direct_fiber=16, check_order=True, tol=1e-8):
    """Term-by-term evaluation of the drift derivative at an H^m base."""
    base = curve.base
    if base.constant_curvature is None:
        raise ValueError("the symmetric-base reduction needs a hyperbolic base")
    if win is None:
        win = default_window(curve)
    avgs, tail, div = _fiber_average(curve, win, n_fiber, S, horizon)
    change = 0.0
    if check_order:
        avgs2, _, _ = _fiber_average(curve, win, 2 * n_fiber, S, horizon)
        change = float(max(abs(a - b) for a, b in zip(avgs, avgs2)))
        if change > max(tol, 1e-3 * max(abs(a) for a in avgs2 + [1e-300])):
            raise ArithmeticError(f"fiber quadrature under-resolved (change {change:.3e})")
    drift = float(-np.mean(div))
    iv_direct = _direct_div_y(curve, win, direct_fiber, S) if direct and base.m == 2 else math.nan
    names = ("I", "II", "III", "IV")
    terms = dict(zip(names, avgs))
    return GreatTerms(terms, float(sum(avgs)), iv_direct, c1_norm(curve, win), drift, win.radius,
                      change, tail, {"volume": win.volume})


def scaling_volume_term(c, m=2, radius=2.0, center=None, h=1e-4, n_dir=48):
    """Oracle for (II) under X = c g: -(l/m) (d/dlam Vol_W)/Vol_W, from the window volume."""
    curve = geo.scaling_curve(c, m)
    if center is None:
        center = np.eye(m)[-1]
    win = window(m, center, radius, n_dir=n_dir)
    vp = float(np.sum(win.w / curve.base.volume_density(win.x) * curve.model(h).volume_density(win.x)))
    vm = float(np.sum(win.w / curve.base.volume_density(win.x) * curve.model(-h).volume_density(win.x)))
    ell = m - 1.0
    return -(ell / m) * (vp - vm) / (2 * h) / win.volume


# ---------------------------------------------------------------------------
# entropy formula


@dataclass
class EntropyDerivative:
    value: float                # divergence route
    value_ibp: float            # Div term integrated by parts against the harmonic density
    oracle: float | None
    c1_norm: float

    def as_dict(self):
        return asdict(self)


def entropy_derivative_symmetric(curve, n_fiber=16, horizon=20.0, win: Window | None = None,
                                 radius=None):
    """(h^lam)'_0 with Z = l X and u_1 = 0 at an H^m base, window-averaged.

    Integrand: -1/2 <grad tr X, l v> + Div(X(l v)) where
    Div(X(v)) = (div X)(v) + tr(X o U) and U = nabla v is the stable tensor
    on v-perp.  The second route replaces Div(X(l v)) by -l^2 X(v, v).
    """
    base = curve.base
    m = base.m
    if win is None:
        win = default_window(curve, radius=radius)
    x = win.x
    v, fw = fiber(base, x, n_fiber)
    xb = np.broadcast_to(x[:, None, :], v.shape)
    st = ric.stable_tensor(base, xb, v, horizon)
    ell = -st.trace
    X = curve.tangent(x)
    dX = curve.tangent_grad(x)
    nX = covariant_tangent(base, X, dX, x)
    dtr = trace_gradient(base, X, dX, x)
    ginv = np.linalg.inv(base.metric(x))
    divX = np.einsum("...ab,...abk->...k", ginv, nX)        # (div X)_k
    E = st.frame[..., :, 1:]                                 # normal frame, (K, F, m, m-1)
    XE = np.einsum("...ij,...fia,...fjb->...fab", X, E, E)
    trXU = np.einsum("...ab,...ba->...", XE, st.U)
    t_grad = -0.5 * ell * np.einsum("...k,...fk->...f", dtr, v)
    t_div = ell * (np.einsum("...k,...fk->...f", divX, v) + trXU)
    Xvv = np.einsum("...ij,...fi,...fj->...f", X, v, v)
    t_ibp = -ell * ell * Xvv
    vol = win.volume
    direct = float(np.sum(win.w * ((t_grad + t_div) @ fw)) / vol)
    ibp = float(np.sum(win.w * ((t_grad + t_ibp) @ fw)) / vol)
    oracle = None
    if isinstance(getattr(curve, "tensor", None), geo.ScaledMetricTensor):
        oracle = -curve.tensor.c * (m - 1) ** 2
    return EntropyDerivative(direct, ibp, oracle, c1_norm(curve, win))


__all__ = ["Window", "window", "default_window", "fiber", "GreatTerms", "formula_great_terms",
           "scaling_volume_term", "EntropyDerivative", "entropy_derivative_symmetric", "c1_norm",
           "geodesic_endpoint"]
