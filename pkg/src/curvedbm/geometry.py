"""Chart-based Riemannian metrics, metric curves and their basic geometry.

A model is a metric g_ij(x) on an open chart domain.  Christoffel symbols
are stored as G[..., k, i, j] = Gamma^k_ij and the curvature tensor as
R[..., l, i, j, k] with R(d_i, d_j) d_k = R^l_ijk d_l, using
R(X, Y) = [nabla_X, nabla_Y] - nabla_[X,Y], so that the Jacobi equation
reads J'' + R(J, c') c' = 0 and sectional curvature is <R(X,Y)Y, X>.

Frames are (..., m, m) arrays whose columns are tangent vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import hyperbolic as hyp


class DomainError(ValueError):
    """A point left the chart domain."""


# ---------------------------------------------------------------------------
# scalar bumps


def _beta(u):
    """Smooth profile exp(1 - 1/(1-u)) on [0, 1), zero beyond, with derivatives."""
    u = np.asarray(u, dtype=float)
    inside = u < 1.0
    w = np.where(inside, 1.0 - u, 1.0)
    b = np.where(inside, np.exp(1.0 - 1.0 / w), 0.0)
    b1 = -b / w**2
    b2 = b * (1.0 / w**4 - 2.0 / w**3)
    return b, b1, b2


@dataclass(frozen=True)
class RadialBump:
    """Compactly supported bump, radial about `center` in hyperbolic distance.

    The profile is a smooth function of q = cosh d(x, center) - 1, so the
    bump is smooth everywhere and invariant under isometries fixing the
    center.  On a flat chart q is replaced by |x - c|^2 / 2.
    """

    center: tuple
    radius: float
    amplitude: float = 1.0
    flat: bool = False

    @property
    def q_radius(self):
        return 0.5 * self.radius**2 if self.flat else math.cosh(self.radius) - 1.0

    def _q(self, x, hess=True):
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.center, dtype=float)
        D = x - c
        s = np.sum(D * D, axis=-1)
        m = x.shape[-1]
        if self.flat:
            q = 0.5 * s
            dq = D
            if not hess:
                return q, dq, None
            ddq = np.broadcast_to(np.eye(m), x.shape[:-1] + (m, m))
            return q, dq, ddq
        a = c[-1]
        y = x[..., -1]
        q = s / (2 * a * y)
        dq = D / (a * y)[..., None]
        dq[..., -1] -= s / (2 * a * y * y)
        if not hess:
            return q, dq, None
        em = np.zeros(m)
        em[-1] = 1.0
        eye = np.eye(m)
        Dm = D[..., :, None] * em[None, :]
        ddq = (eye / (a * y)[..., None, None]
               - (Dm + np.swapaxes(Dm, -1, -2)) / (a * y * y)[..., None, None]
               + (s / (a * y**3))[..., None, None] * np.outer(em, em))
        return q, dq, ddq

    def supports(self):
        return [(tuple(self.center), self.radius)]

    def value(self, x):
        q, _, _ = self._q(x, hess=False)
        return self.amplitude * _beta(q / self.q_radius)[0]

    def grad(self, x):
        """Chart gradient (partial derivatives)."""
        q, dq, _ = self._q(x, hess=False)
        _, b1, _ = _beta(q / self.q_radius)
        return (self.amplitude * b1 / self.q_radius)[..., None] * dq

    def hess(self, x):
        q, dq, ddq = self._q(x)
        _, b1, b2 = _beta(q / self.q_radius)
        qr = self.q_radius
        return self.amplitude * ((b2 / qr**2)[..., None, None] * dq[..., :, None] * dq[..., None, :]
                                 + (b1 / qr)[..., None, None] * ddq)

    def volume_integral(self, m: int = 2) -> float:
        """int bump dVol over H^2 (exact reduction: dVol = 2 pi dq in polar form)."""
        if m != 2 or self.flat:
            raise NotImplementedError("closed reduction only for H^2")
        u, w = np.polynomial.legendre.leggauss(200)
        u = 0.5 * (u + 1.0)
        return float(2 * np.pi * self.q_radius * self.amplitude * np.sum(0.5 * w * _beta(u)[0]))


@dataclass(frozen=True)
class BumpSum:
    """Linear combination of radial bumps."""

    bumps: tuple
    weights: tuple

    def supports(self):
        return [s for b in self.bumps for s in b.supports()]

    def value(self, x):
        return sum(w * b.value(x) for b, w in zip(self.bumps, self.weights))

    def grad(self, x):
        return sum(w * b.grad(x) for b, w in zip(self.bumps, self.weights))

    def hess(self, x):
        return sum(w * b.hess(x) for b, w in zip(self.bumps, self.weights))

    def volume_integral(self, m: int = 2) -> float:
        return sum(w * b.volume_integral(m) for b, w in zip(self.bumps, self.weights))


def zero_mean_bump(center, r_inner, r_outer, amplitude=1.0):
    """Difference of concentric bumps with exactly zero H^2 volume integral.

    In geodesic polar coordinates dVol = 2 pi sinh r dr = 2 pi dq, so a bump
    profile in q/q_R integrates to q_R times a constant; the weights q_in/q_out
    cancel the constant.
    """
    inner = RadialBump(tuple(center), r_inner, amplitude)
    outer = RadialBump(tuple(center), r_outer, amplitude)
    return BumpSum((inner, outer), (1.0, -inner.q_radius / outer.q_radius))


# ---------------------------------------------------------------------------
# models


def _inv_metric(g):
    return np.linalg.inv(g)


def christoffel_from_metric(g, dg):
    """Gamma^k_ij from g and dg[..., l, i, j] = d_l g_ij."""
    ginv = _inv_metric(g)
    low = 0.5 * (np.einsum("...ipj->...pij", dg) + np.einsum("...jpi->...pij", dg)
                 - np.einsum("...pij->...pij", dg))
    return np.einsum("...kp,...pij->...kij", ginv, low)


def riemann_from_christoffel(G, dG):
    """R^l_ijk from Gamma and dG[..., a, k, i, j] = d_a Gamma^k_ij."""
    t1 = np.einsum("...iljk->...lijk", dG)
    t2 = np.einsum("...jlik->...lijk", dG)
    t3 = np.einsum("...lip,...pjk->...lijk", G, G)
    t4 = np.einsum("...ljp,...pik->...lijk", G, G)
    return t1 - t2 + t3 - t4


class MetricModel:
    """Base class: subclasses provide `metric` and, when they can, analytic derivatives."""

    name = "generic"
    constant_curvature: float | None = None
    h_fd = 1e-4

    def __init__(self, m: int):
        if m < 2:
            raise ValueError("dimension must be at least 2")
        self.m = m

    # domain ---------------------------------------------------------------
    def in_domain(self, x):
        x = np.asarray(x, dtype=float)
        return np.all(np.isfinite(x), axis=-1)

    def check_domain(self, x):
        ok = self.in_domain(x)
        if not np.all(ok):
            raise DomainError(f"{np.count_nonzero(~ok)} point(s) outside the chart domain")

    # metric and derivatives ----------------------------------------------
    def metric(self, x):
        raise NotImplementedError

    def _fd(self, f, x):
        """Centered differences of f along each chart axis, new axis before f's axes."""
        x = np.asarray(x, dtype=float)
        h = self.h_fd
        outs = []
        for a in range(self.m):
            e = np.zeros(self.m)
            e[a] = h
            outs.append((f(x + e) - f(x - e)) / (2 * h))
        return np.stack(outs, axis=x.ndim - 1)

    def dmetric(self, x):
        return self._fd(self.metric, x)

    def christoffel(self, x):
        x = np.asarray(x, dtype=float)
        return christoffel_from_metric(self.metric(x), self.dmetric(x))

    def christoffel_fd(self, x):
        """Christoffels from finite differences of g only (oracle)."""
        x = np.asarray(x, dtype=float)
        return christoffel_from_metric(self.metric(x), MetricModel.dmetric(self, x))

    def dchristoffel(self, x):
        return self._fd(self.christoffel, x)

    def riemann(self, x):
        x = np.asarray(x, dtype=float)
        return riemann_from_christoffel(self.christoffel(x), self.dchristoffel(x))

    def volume_density(self, x):
        return np.sqrt(np.linalg.det(self.metric(x)))

    # contractions ---------------------------------------------------------
    def inner(self, x, v, w):
        return np.einsum("...i,...ij,...j->...", v, self.metric(x), w)

    def norm(self, x, v):
        return np.sqrt(self.inner(x, v, v))

    def geodesic_rhs(self, x, v, W=None):
        """Accelerations -Gamma(v, v) and -Gamma(v, w) for rows w of W."""
        G = self.christoffel(x)
        av = -np.einsum("...kij,...i,...j->...k", G, v, v)
        if W is None:
            return av, None
        aW = -np.einsum("...kij,...i,...nj->...nk", G, v, W)
        return av, aW

    def frame_curvature(self, x, U):
        """Frame components: out[..., a, b, c, d] = (u^-1 R(u e_a, u e_b) u e_c)_d."""
        R = self.riemann(x)
        RU = np.einsum("...lijk,...ia,...jb,...kc->...abcl", R, U, U, U)
        return np.einsum("...dl,...abcl->...abcd", np.linalg.inv(U), RU)

    def sectional_curvature(self, x, X, Y):
        R = self.riemann(x)
        g = self.metric(x)
        RXYY = np.einsum("...lijk,...i,...j,...k->...l", R, X, Y, Y)
        num = np.einsum("...l,...lp,...p->...", RXYY, g, X)
        gxx = self.inner(x, X, X)
        gyy = self.inner(x, Y, Y)
        gxy = self.inner(x, X, Y)
        return num / (gxx * gyy - gxy**2)

    # geodesics ------------------------------------------------------------
    def exp_transport(self, x, v, frames=None, t=1.0, max_sub=0.05):
        """RK4 geodesic step of parameter length t with parallel transport.

        The number of substeps is chosen so that every substep covers at
        most `max_sub` of arclength.
        """
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float) * t
        L = float(np.max(self.norm(x, v))) if v.size else 0.0
        n = max(1, int(math.ceil(L / max_sub)))
        h = 1.0 / n
        W = None if frames is None else np.swapaxes(np.asarray(frames, dtype=float), -1, -2)
        for _ in range(n):
            x, v, W = _rk4_geodesic(self, x, v, W, h)
        if W is None:
            return x, v / t if t else v, None
        return x, v / t if t else v, np.swapaxes(W, -1, -2)

    def exp(self, x, v):
        return self.exp_transport(x, v)[0]

    def log(self, x, z, tol=1e-12, max_iter=50, return_residual=False):
        """Shooting: Newton on v -> exp_x(v) - z with finite-difference Jacobians."""
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        v = self._log_guess(x, z)
        eps = 1e-7
        res = np.inf
        for _ in range(max_iter):
            F = self.exp(x, v) - z
            res = float(np.max(np.abs(F))) if F.size else 0.0
            if res < tol:
                break
            J = np.empty(F.shape + (self.m,))
            for a in range(self.m):
                dv = np.zeros(self.m)
                dv[a] = eps
                J[..., a] = (self.exp(x, v + dv) - self.exp(x, v - dv)) / (2 * eps)
            v = v - np.linalg.solve(J, F[..., None])[..., 0]
        if return_residual:
            return v, res
        if not np.isfinite(res) or res > 1e3 * tol:
            raise RuntimeError(f"geodesic shooting failed, residual {res:.3e}")
        return v

    def _log_guess(self, x, z):
        return z - x

    def distance(self, x, z, return_residual=False):
        v, res = self.log(x, z, return_residual=True)
        d = self.norm(x, v)
        if return_residual:
            return d, res
        if res > 1e-8:
            raise RuntimeError(f"geodesic shooting failed, residual {res:.3e}")
        return d


def _rk4_geodesic(model, x, v, W, h):
    def f(x_, v_, W_):
        return model.geodesic_rhs(x_, v_, W_)

    a1, A1 = f(x, v, W)
    x2, v2 = x + 0.5 * h * v, v + 0.5 * h * a1
    W2 = None if W is None else W + 0.5 * h * A1
    a2, A2 = f(x2, v2, W2)
    x3, v3 = x + 0.5 * h * v2, v + 0.5 * h * a2
    W3 = None if W is None else W + 0.5 * h * A2
    a3, A3 = f(x3, v3, W3)
    x4, v4 = x + h * v3, v + h * a3
    W4 = None if W is None else W + h * A3
    a4, A4 = f(x4, v4, W4)
    xn = x + h / 6 * (v + 2 * v2 + 2 * v3 + v4)
    vn = v + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
    Wn = None if W is None else W + h / 6 * (A1 + 2 * A2 + 2 * A3 + A4)
    return xn, vn, Wn


class Euclidean(MetricModel):
    name = "euclidean"
    constant_curvature = 0.0

    def metric(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(self.m), x.shape[:-1] + (self.m, self.m)).copy()

    def dmetric(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (self.m,) * 3)

    def christoffel(self, x):
        return self.dmetric(x)

    def dchristoffel(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (self.m,) * 4)

    def geodesic_rhs(self, x, v, W=None):
        return np.zeros_like(v), (None if W is None else np.zeros_like(W))

    def exp_transport(self, x, v, frames=None, t=1.0, max_sub=None):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        return x + t * v, v.copy(), (None if frames is None else np.array(frames, dtype=float))

    def log(self, x, z, return_residual=False, **kw):
        v = np.asarray(z, dtype=float) - np.asarray(x, dtype=float)
        return (v, 0.0) if return_residual else v

    def frame_curvature(self, x, U):
        U = np.asarray(U)
        return np.zeros(U.shape[:-2] + (self.m,) * 4)


class ConformallyFlat(MetricModel):
    """g = exp(2 psi) delta with psi supplied with gradient and Hessian."""

    name = "conformal"

    def __init__(self, m, psi, dpsi, ddpsi, domain=None):
        super().__init__(m)
        self.psi, self.dpsi, self.ddpsi = psi, dpsi, ddpsi
        self._domain = domain

    def in_domain(self, x):
        ok = super().in_domain(x)
        if self._domain is not None:
            ok &= self._domain(np.asarray(x, dtype=float))
        return ok

    def metric(self, x):
        x = np.asarray(x, dtype=float)
        e = np.exp(2 * self.psi(x))
        return e[..., None, None] * np.eye(self.m)

    def dmetric(self, x):
        x = np.asarray(x, dtype=float)
        e = np.exp(2 * self.psi(x))
        return (2 * e[..., None] * self.dpsi(x))[..., :, None, None] * np.eye(self.m)

    def christoffel(self, x):
        p = self.dpsi(np.asarray(x, dtype=float))
        I = np.eye(self.m)
        return (np.einsum("ki,...j->...kij", I, p) + np.einsum("kj,...i->...kij", I, p)
                - np.einsum("ij,...k->...kij", I, p))

    def dchristoffel(self, x):
        H = self.ddpsi(np.asarray(x, dtype=float))  # [..., j, a]
        I = np.eye(self.m)
        return (np.einsum("ki,...ja->...akij", I, H) + np.einsum("kj,...ia->...akij", I, H)
                - np.einsum("ij,...ka->...akij", I, H))

    def geodesic_rhs(self, x, v, W=None):
        p = self.dpsi(x)
        pv = np.sum(p * v, axis=-1)
        av = -(2 * pv[..., None] * v - np.sum(v * v, axis=-1)[..., None] * p)
        if W is None:
            return av, None
        pW = np.einsum("...j,...nj->...n", p, W)
        vW = np.einsum("...j,...nj->...n", v, W)
        aW = -(pv[..., None, None] * W + pW[..., :, None] * v[..., None, :]
               - vW[..., :, None] * p[..., None, :])
        return av, aW

    def volume_density(self, x):
        return np.exp(self.m * self.psi(np.asarray(x, dtype=float)))


def _half_space_psi(x):
    return -np.log(x[..., -1])


def _half_space_dpsi(x):
    out = np.zeros_like(x)
    out[..., -1] = -1.0 / x[..., -1]
    return out


def _half_space_ddpsi(x):
    m = x.shape[-1]
    out = np.zeros(x.shape[:-1] + (m, m))
    out[..., -1, -1] = 1.0 / x[..., -1] ** 2
    return out


def _upper(x):
    return x[..., -1] > 0


class HyperbolicSpace(ConformallyFlat):
    """H^m in the upper half-space chart, with closed-form geodesics."""

    name = "hyperbolic"
    constant_curvature = -1.0

    def __init__(self, m: int = 2):
        super().__init__(m, _half_space_psi, _half_space_dpsi, _half_space_ddpsi, _upper)

    def riemann(self, x):
        g = self.metric(x)
        I = np.eye(self.m)
        K = self.constant_curvature
        return K * (np.einsum("...jk,li->...lijk", g, I) - np.einsum("...ik,lj->...lijk", g, I))

    def frame_curvature(self, x, U):
        U = np.asarray(U)
        I = np.eye(self.m)
        K = self.constant_curvature
        base = K * (np.einsum("bc,ad->abcd", I, I) - np.einsum("ac,bd->abcd", I, I))
        return np.broadcast_to(base, U.shape[:-2] + base.shape)

    def exp_transport(self, x, v, frames=None, t=1.0, max_sub=None):
        return hyp.exp_transport(x, v, frames, t)

    def log(self, x, z, return_residual=False, **kw):
        v = hyp.log_map(x, z)
        return (v, 0.0) if return_residual else v

    def distance(self, x, z, return_residual=False):
        d = hyp.distance(x, z)
        return (d, 0.0) if return_residual else d


class PerturbedHyperbolic(ConformallyFlat):
    """exp(2 lam phi) g_H on the half-space with phi compactly supported.

    Geodesic steps whose hyperbolic length cannot reach the support are
    taken with the closed-form hyperbolic map, which is exact there.
    """

    def __init__(self, m, phi, lam, max_sub=0.1):
        self.phi, self.lam, self.max_sub = phi, lam, max_sub
        super().__init__(m, self._psi, self._dpsi, self._ddpsi, _upper)
        self.name = "hyperbolic+conformal"
        self._base_log = "hyperbolic"

    def _psi(self, x):
        return self.lam * self.phi.value(x) + _half_space_psi(x)

    def _dpsi(self, x):
        return self.lam * self.phi.grad(x) + _half_space_dpsi(x)

    def _ddpsi(self, x):
        return self.lam * self.phi.hess(x) + _half_space_ddpsi(x)

    def clear_of_support(self, x, reach):
        """True where the hyperbolic ball of radius `reach` about x misses the support."""
        x = np.asarray(x, dtype=float)
        ok = np.ones(x.shape[:-1], dtype=bool)
        for c, r in self.phi.supports():
            ok &= hyp.distance(x, np.asarray(c, dtype=float)) > r + reach + 1e-9
        return ok

    def exp_transport(self, x, v, frames=None, t=1.0, max_sub=None):
        max_sub = self.max_sub if max_sub is None else max_sub
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if x.ndim == 1:
            return super().exp_transport(x, v, frames, t, max_sub)
        reach = np.abs(t) * hyp.norm(x, v)
        far = self.clear_of_support(x, reach)
        if np.all(far):
            return hyp.exp_transport(x, v, frames, t)
        xo = np.empty(np.broadcast_shapes(x.shape, v.shape))
        vo = np.empty_like(xo)
        fo = None if frames is None else np.empty(np.shape(frames))
        near = ~far
        vb = np.broadcast_to(v, xo.shape)
        xb = np.broadcast_to(x, xo.shape)
        a = hyp.exp_transport(xb[far], vb[far], None if frames is None else frames[far], t)
        b = super().exp_transport(xb[near], vb[near], None if frames is None else frames[near], t, max_sub)
        xo[far], vo[far] = a[0], a[1]
        xo[near], vo[near] = b[0], b[1]
        if frames is not None:
            fo[far], fo[near] = a[2], b[2]
        return xo, vo, fo

    def distance(self, x, z, return_residual=False):
        """First-order distance: perturbed length of the hyperbolic geodesic."""
        d = first_order_distance(self, HyperbolicSpace(self.m), x, z)
        return (d, 0.0) if return_residual else d


def perturbed_conformal(m: int, phi, lam: float, base: str = "hyperbolic") -> ConformallyFlat:
    """exp(2 lam phi) times the base metric (H^m half-space or Euclidean)."""
    if base == "hyperbolic":
        return PerturbedHyperbolic(m, phi, lam)
    model = ConformallyFlat(m, lambda x: lam * phi.value(x), lambda x: lam * phi.grad(x),
                            lambda x: lam * phi.hess(x))
    model.name = f"{base}+conformal"
    model._base_log = base
    return model


def _conformal_log_guess(self, x, z):
    if getattr(self, "_base_log", None) == "hyperbolic":
        return hyp.log_map(x, z)
    return z - x


ConformallyFlat._log_guess = _conformal_log_guess


@dataclass(frozen=True)
class TensorBump:
    """Symmetric 2-tensor field b(x) w(x) S with b a radial bump, w = y^-2 on H^m."""

    bump: RadialBump
    S: tuple
    hyperbolic: bool = True

    def _w(self, x):
        m = x.shape[-1]
        if not self.hyperbolic:
            return np.ones(x.shape[:-1]), np.zeros(x.shape), np.zeros(x.shape + (m,))
        y = x[..., -1]
        w = y**-2
        dw = np.zeros(x.shape)
        dw[..., -1] = -2 * y**-3
        ddw = np.zeros(x.shape + (m,))
        ddw[..., -1, -1] = 6 * y**-4
        return w, dw, ddw

    def value(self, x):
        x = np.asarray(x, dtype=float)
        w, _, _ = self._w(x)
        return (self.bump.value(x) * w)[..., None, None] * np.asarray(self.S)

    def grad(self, x):
        """d_l X_ij as [..., l, i, j]."""
        x = np.asarray(x, dtype=float)
        w, dw, _ = self._w(x)
        b = self.bump.value(x)
        db = self.bump.grad(x)
        f = db * w[..., None] + b[..., None] * dw
        return f[..., :, None, None] * np.asarray(self.S)

    def hess(self, x):
        x = np.asarray(x, dtype=float)
        w, dw, ddw = self._w(x)
        b = self.bump.value(x)
        db = self.bump.grad(x)
        hb = self.bump.hess(x)
        f = (hb * w[..., None, None] + db[..., :, None] * dw[..., None, :]
             + dw[..., :, None] * db[..., None, :] + b[..., None, None] * ddw)
        return f[..., :, :, None, None] * np.asarray(self.S)


class AdditiveModel(MetricModel):
    """g = g_base + lam * X with X a TensorBump-like field with analytic derivatives."""

    name = "additive"

    def __init__(self, base: MetricModel, tensor, lam: float):
        super().__init__(base.m)
        self.base, self.tensor, self.lam = base, tensor, lam

    def in_domain(self, x):
        return self.base.in_domain(x)

    def metric(self, x):
        return self.base.metric(x) + self.lam * self.tensor.value(x)

    def dmetric(self, x):
        return self.base.dmetric(x) + self.lam * self.tensor.grad(x)

    def d2metric(self, x):
        x = np.asarray(x, dtype=float)
        base = self.base._fd(self.base.dmetric, x) if not hasattr(self.base, "d2metric") \
            else self.base.d2metric(x)
        return base + self.lam * self.tensor.hess(x)

    def dchristoffel(self, x):
        x = np.asarray(x, dtype=float)
        g = self.metric(x)
        dg = self.dmetric(x)
        d2g = self.d2metric(x)  # [..., a, l, i, j] = d_a d_l g_ij
        ginv = np.linalg.inv(g)
        low = 0.5 * (np.einsum("...ipj->...pij", dg) + np.einsum("...jpi->...pij", dg) - dg)
        dlow = 0.5 * (np.einsum("...aipj->...apij", d2g) + np.einsum("...ajpi->...apij", d2g) - d2g)
        dginv = -np.einsum("...kp,...apq,...qr->...akr", ginv, dg, ginv)
        return np.einsum("...akp,...pij->...akij", dginv, low) + np.einsum("...kp,...apij->...akij", ginv, dlow)

    def _log_guess(self, x, z):
        return self.base.log(x, z)


# ---------------------------------------------------------------------------
# metric curves


class MetricCurve:
    """lam -> g^lam with tangent X = d/dlam g^lam at 0."""

    volume_preserving = False
    base: MetricModel

    def model(self, lam: float) -> MetricModel:
        raise NotImplementedError

    def tangent(self, x):
        raise NotImplementedError

    def tangent_grad(self, x):
        """Chart derivatives d_l X_ij as [..., l, i, j]."""
        raise NotImplementedError

    def dchristoffel_dlam(self, x, h=1e-4):
        """d/dlam Gamma^lam at 0 (centered differences by default)."""
        return (self.model(h).christoffel(x) - self.model(-h).christoffel(x)) / (2 * h)

    def initial_frame_derivative(self, x, U):
        """d/dlam of the Gram-Schmidt frame of U under g^lam, as frame-coordinate matrix."""
        h = 1e-5
        Up = gram_schmidt(self.model(h), x, U)
        Um = gram_schmidt(self.model(-h), x, U)
        return np.linalg.solve(U, (Up - Um) / (2 * h))

    def trace_tangent(self, x):
        g = self.base.metric(x)
        return np.einsum("...ij,...ij->...", np.linalg.inv(g), self.tangent(x))


class ConstantCurve(MetricCurve):
    def __init__(self, base: MetricModel):
        self.base = base
        self.volume_preserving = True

    def model(self, lam):
        return self.base

    def tangent(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape + (self.base.m,))

    def tangent_grad(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape + (self.base.m, self.base.m))

    def dchristoffel_dlam(self, x, h=None):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (self.base.m,) * 3)

    def initial_frame_derivative(self, x, U):
        return np.zeros(np.shape(U))


class ConformalCurve(MetricCurve):
    """g^lam = exp(2 lam phi) g on the half-space (or flat) chart."""

    def __init__(self, phi, m: int = 2, base: str = "hyperbolic", volume_preserving=None):
        self.phi, self.m, self.kind = phi, m, base
        self.base = HyperbolicSpace(m) if base == "hyperbolic" else Euclidean(m)
        if volume_preserving is None:
            try:
                volume_preserving = abs(phi.volume_integral(m)) < 1e-9
            except (NotImplementedError, AttributeError):
                volume_preserving = False
        self.volume_preserving = volume_preserving

    def model(self, lam):
        if lam == 0:
            return self.base
        return perturbed_conformal(self.m, self.phi, lam, self.kind)

    def tangent(self, x):
        x = np.asarray(x, dtype=float)
        return 2 * self.phi.value(x)[..., None, None] * self.base.metric(x)

    def tangent_grad(self, x):
        x = np.asarray(x, dtype=float)
        return (2 * self.phi.grad(x)[..., :, None, None] * self.base.metric(x)[..., None, :, :]
                + 2 * self.phi.value(x)[..., None, None, None] * self.base.dmetric(x))

    def dchristoffel_dlam(self, x, h=None):
        p = self.phi.grad(np.asarray(x, dtype=float))
        I = np.eye(self.m)
        return (np.einsum("ki,...j->...kij", I, p) + np.einsum("kj,...i->...kij", I, p)
                - np.einsum("ij,...k->...kij", I, p))

    def initial_frame_derivative(self, x, U):
        f = self.phi.value(np.asarray(x, dtype=float))
        return -f[..., None, None] * np.eye(self.m)


class AdditiveCurve(MetricCurve):
    """g^lam = g + lam X for a tensor field with analytic derivatives."""

    def __init__(self, tensor, m: int = 2, base: MetricModel | None = None,
                 volume_preserving: bool = False):
        self.tensor = tensor
        self.base = base if base is not None else HyperbolicSpace(m)
        self.m = self.base.m
        self.volume_preserving = volume_preserving

    def model(self, lam):
        if lam == 0:
            return self.base
        return AdditiveModel(self.base, self.tensor, lam)

    def tangent(self, x):
        return self.tensor.value(np.asarray(x, dtype=float))

    def tangent_grad(self, x):
        return self.tensor.grad(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ScaledMetricTensor:
    """X = c g for the half-space metric (a pure rescaling)."""

    c: float
    m: int = 2

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return (self.c / x[..., -1] ** 2)[..., None, None] * np.eye(self.m)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (self.m, self.m))
        out[..., -1, :, :] = (-2 * self.c / x[..., -1] ** 3)[..., None, None] * np.eye(self.m)
        return out

    def hess(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (self.m,) * 3)
        out[..., -1, -1, :, :] = (6 * self.c / x[..., -1] ** 4)[..., None, None] * np.eye(self.m)
        return out


def scaling_curve(c: float, m: int = 2) -> AdditiveCurve:
    return AdditiveCurve(ScaledMetricTensor(c, m), m=m, volume_preserving=(c == 0))


# ---------------------------------------------------------------------------
# operations


def christoffel_at(model: MetricModel, x):
    x = np.asarray(x, dtype=float)
    model.check_domain(x)
    g = model.metric(x)
    if np.any(np.linalg.eigvalsh(g) <= 0):
        raise ValueError("metric is not positive definite at x")
    return model.christoffel(x)


def metric_compatibility_residual(model: MetricModel, x):
    """max |nabla_k g_ij| using the model's Christoffels."""
    x = np.asarray(x, dtype=float)
    g = model.metric(x)
    dg = model.dmetric(x)
    G = model.christoffel(x)
    cov = dg - np.einsum("...pki,...pj->...kij", G, g) - np.einsum("...pkj,...ip->...kij", G, g)
    return float(np.max(np.abs(cov)))


@dataclass
class Curvature:
    tensor: np.ndarray
    model: MetricModel = field(repr=False)
    x: np.ndarray = field(repr=False)

    def sectional(self, X, Y):
        return self.model.sectional_curvature(self.x, X, Y)


def curvature_at(model: MetricModel, x) -> Curvature:
    x = np.asarray(x, dtype=float)
    model.check_domain(x)
    return Curvature(model.riemann(x), model, x)


def curvature_symmetry_defects(model: MetricModel, x):
    """Lowered tensor symmetries: antisymmetry, pair swap, first Bianchi."""
    R = model.riemann(x)
    g = model.metric(x)
    Rl = np.einsum("...pl,...lijk->...pijk", g, R)  # R_pijk = <R(d_i,d_j)d_k, d_p>
    anti = np.max(np.abs(Rl + np.swapaxes(Rl, -3, -2)))
    anti2 = np.max(np.abs(Rl + np.swapaxes(Rl, -4, -1)))
    # R(i,j,k,p) = R(k,p,i,j) in (i,j,k,p) = (i,j,k,lowered) form
    Rijkp = np.einsum("...pijk->...ijkp", Rl)
    swap = np.max(np.abs(Rijkp - np.einsum("...ijkp->...kpij", Rijkp)))
    bianchi = np.max(np.abs(R + np.einsum("...lijk->...ljki", R) + np.einsum("...lijk->...lkij", R)))
    return {"antisymmetry": float(max(anti, anti2)), "pair_swap": float(swap), "bianchi": float(bianchi)}


def geodesic_integrate(model: MetricModel, x, v, t: float, step: float = 1e-3):
    """Integrate the geodesic equation to parameter t with fixed RK4 steps."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    n = max(1, int(math.ceil(abs(t) / step)))
    h = t / n
    for _ in range(n):
        x, v, _ = _rk4_geodesic(model, x, v, None, h)
        if not np.all(model.in_domain(x)):
            raise DomainError("geodesic left the chart domain")
    return x, v


def distance(model: MetricModel, x, z):
    return model.distance(np.asarray(x, dtype=float), np.asarray(z, dtype=float))


def first_order_distance(model: MetricModel, base: MetricModel, x, z, panel: float = 0.25, n_nodes: int = 6):
    """Length in `model` of the `base` geodesic from x to z.

    For a conformal perturbation exp(2 lam phi) g this equals the perturbed
    distance up to O(lam^2), because length is stationary at geodesics.
    Composite Gauss-Legendre with panels of base length at most `panel`.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    v = base.log(x, z)
    d0 = base.norm(x, v)
    n_panels = max(1, int(math.ceil(float(np.max(d0)) / panel))) if d0.size else 1
    u, w = np.polynomial.legendre.leggauss(n_nodes)
    u = 0.5 * (u + 1)
    w = 0.5 * w
    total = np.zeros(d0.shape)
    for k in range(n_panels):
        for ui, wi in zip(u, w):
            p, vel, _ = base.exp_transport(x, v, None, t=(k + ui) / n_panels)
            total += wi / n_panels * model.norm(p, vel)
    return total


def gram_schmidt(model: MetricModel, x, U):
    """Modified Gram-Schmidt of frame columns in the metric at x."""
    x = np.asarray(x, dtype=float)
    U = np.array(U, dtype=float)
    g = model.metric(x)
    m = U.shape[-1]
    for j in range(m):
        for i in range(j):
            c = np.einsum("...a,...ab,...b->...", U[..., :, i], g, U[..., :, j])
            U[..., :, j] -= c[..., None] * U[..., :, i]
        n = np.sqrt(np.einsum("...a,...ab,...b->...", U[..., :, j], g, U[..., :, j]))
        U[..., :, j] /= n[..., None]
    return U


def frame_defect(model: MetricModel, x, U):
    g = model.metric(x)
    G = np.einsum("...ai,...ab,...bj->...ij", U, g, U)
    return np.max(np.abs(G - np.eye(U.shape[-1])), axis=(-1, -2))


def orthonormal_frame(model: MetricModel, x):
    """Gram-Schmidt of the coordinate frame at x."""
    x = np.asarray(x, dtype=float)
    I = np.broadcast_to(np.eye(model.m), x.shape[:-1] + (model.m, model.m))
    return gram_schmidt(model, x, I)


def parallel_transport(model: MetricModel, points, v):
    """Transport v along the piecewise geodesic through `points` (shape (n, ..., m))."""
    points = np.asarray(points, dtype=float)
    w = np.asarray(v, dtype=float)[..., None]
    for a, b in zip(points[:-1], points[1:]):
        w = model.exp_transport(a, model.log(a, b), w)[2]
    return w[..., 0]
