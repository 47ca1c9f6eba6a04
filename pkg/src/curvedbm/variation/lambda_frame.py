"""The lam-derivative of the horizontal Brownian motion and the z-field.

With the driving noise held fixed, d/dlam of the frame process at lam = 0
solves the tangent flow (dz = Z o dB, dZ = R(o dB, z)) with the extra vertical
forcing A(u, dB) = -u^-1 dGamma/dlam(u dB, u .) and initial data z = 0,
Z = u^-1 d/dlam u_0^lam.  The endpoint derivative is u_T z_T.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial

import numpy as np

from .. import frames as fr
from .. import geometry as geo
from .. import hyperbolic as hyp
from .. import parallel


def lambda_forcing(curve):
    """Vertical forcing A(x, u, dB) as an (m x m) matrix per path."""
    base = curve.base

    def extra(x, u, dB):
        e = np.einsum("...ij,...j->...i", u, dB)
        dG = curve.dchristoffel_dlam(x)
        P = np.einsum("...kij,...i,...jc->...kc", dG, e, u)
        # u^-1 = u^T g for an orthonormal frame
        uinv = np.einsum("...ia,...ij->...aj", u, base.metric(x))
        return -np.einsum("...aj,...jc->...ac", uinv, P)

    return extra


@dataclass
class LambdaDerivative:
    vector: np.ndarray          # u_T z_T, chart components at x_T
    z: np.ndarray               # frame coordinates z_T
    Z: np.ndarray


def frame_lambda_derivative(curve, path: fr.PathBundle) -> LambdaDerivative:
    """Pathwise d/dlam of the endpoint, with the same noise as the primal path."""
    if path.x is None or path.u is None or path.x.shape[1] != path.n_steps + 1:
        raise ValueError("the path bundle must store the full frame path")
    x0, u0 = path.x[:, 0], path.u[:, 0]
    N, _, m = path.increments.shape
    Z0 = curve.initial_frame_derivative(x0, u0)
    tf = fr.tangent_flow(curve.base, path.x, path.u, path.increments, np.zeros(m), Z0,
                         extra=lambda_forcing(curve))
    uT = path.u[:, -1]
    return LambdaDerivative(np.einsum("...ij,...j->...i", uT, tf.z), tf.z, tf.Z)


def crn_endpoint_difference(curve, x0, increments, lam=1e-3, u0=None):
    """Coupled central difference of x_T^lam in lam (identical noise at +-lam)."""
    base = curve.base
    if u0 is None:
        u0 = fr.initial_frame(base, x0)
    out = []
    for sgn in (1.0, -1.0):
        model = curve.model(sgn * lam)
        ul = geo.gram_schmidt(model, np.asarray(x0, dtype=float), u0)
        xT, _, _ = fr.develop(model, x0, ul, increments, store=False)
        out.append(xT)
    return (out[0] - out[1]) / (2 * lam)


def _chunk_accumulator(indices, curve, x0, T, dt, seed, lam):
    base = curve.base
    bundle = fr.simulate_paths(base, x0, T, dt, seed, indices)
    acc = frame_lambda_derivative(curve, bundle)
    out = {"vector": acc.vector, "xT": bundle.x[:, -1], "energy": np.sum(acc.z ** 2, axis=-1)}
    if lam:
        out["fd"] = crn_endpoint_difference(curve, x0, bundle.increments, lam, bundle.u[0, 0])
    return out


def accumulator_check(curve, x0, T, dt, N, seed, lam=1e-3, workers=1):
    """Accumulator versus the coupled finite difference over N paths."""
    fn = partial(_chunk_accumulator, curve=curve, x0=np.asarray(x0, dtype=float), T=T, dt=dt,
                 seed=seed, lam=lam)
    res = parallel.map_paths(fn, N, workers)
    vec = parallel.concat(res, "vector")
    fd = parallel.concat(res, "fd") if lam else None
    return {"vector": vec, "fd": fd, "xT": parallel.concat(res, "xT"),
            "energy": parallel.concat(res, "energy")}


# ---------------------------------------------------------------------------
# z-field diagnostics


@dataclass
class ZField:
    """Kernel-regression estimate of E[u_T z_T | x_T = y] (diagnostic only)."""

    endpoints: np.ndarray
    vectors: np.ndarray
    bandwidth: float

    @classmethod
    def fit(cls, endpoints, vectors, scale=1.0):
        n = endpoints.shape[0]
        return cls(np.asarray(endpoints, float), np.asarray(vectors, float), scale * n ** (-1 / 6))

    def __call__(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        d = hyp.distance(y[:, None, :], self.endpoints[None, :, :])
        w = np.exp(-0.5 * (d / self.bandwidth) ** 2)
        # vectors live at different base points; compare in frame coordinates of y
        # by scaling with the local conformal factor of the half-space chart
        scale = (y[:, None, -1] / self.endpoints[None, :, -1])[..., None]
        num = np.einsum("qn,qni->qi", w, self.vectors[None] * scale)
        den = np.sum(w, axis=1)
        return num / np.where(den > 0, den, 1.0)[:, None], den


def z_field_binned(curve, x0, T, dt, N, seed, queries, workers=1):
    data = accumulator_check(curve, x0, T, dt, N, seed, lam=0.0, workers=workers)
    zf = ZField.fit(data["xT"], data["vector"])
    est, mass = zf(queries)
    return {"estimate": est, "mass": mass, "bandwidth": zf.bandwidth}


__all__ = ["lambda_forcing", "LambdaDerivative", "frame_lambda_derivative",
           "crn_endpoint_difference", "accumulator_check", "ZField", "z_field_binned"]
