"""Orthonormal frames, Brownian motion on the frame bundle and its tangent flow.

The Brownian step is geodesic (McKean-type): from u_k move along the
geodesic with initial velocity u_k dB for unit parameter and carry the frame
by parallel transport.  With increments of variance 2 dt this is a weak
order one scheme for the generator Delta.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from . import rng

MAGIC = b"CBMP"
_HEADER = struct.Struct("<4sIIIddq")


@dataclass
class FrameState:
    x: np.ndarray
    u: np.ndarray

    def defect(self, model):
        return geo.frame_defect(model, self.x, self.u)


@dataclass
class PathBundle:
    """A batch of sample paths sharing a time grid.

    increments has shape (N, n, m); x and u (when stored) have n + 1 time slots.
    """

    dt: float
    T: float
    seed: int
    increments: np.ndarray
    indices: np.ndarray
    x: np.ndarray | None = None
    u: np.ndarray | None = None
    log_weight: np.ndarray | None = None
    max_defect: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def m(self):
        return self.increments.shape[-1]

    @property
    def n_steps(self):
        return self.increments.shape[1]

    def to_bytes(self) -> bytes:
        N, n, m = self.increments.shape
        head = _HEADER.pack(MAGIC, m, n, N, self.dt, self.T, self.seed)
        body = np.ascontiguousarray(self.increments, dtype="<f8").tobytes()
        idx = np.ascontiguousarray(self.indices, dtype="<i8").tobytes()
        return head + idx + body

    @classmethod
    def from_bytes(cls, blob: bytes) -> "PathBundle":
        magic, m, n, N, dt, T, seed = _HEADER.unpack_from(blob, 0)
        if magic != MAGIC:
            raise ValueError("not a path record")
        off = _HEADER.size
        idx = np.frombuffer(blob, dtype="<i8", count=N, offset=off).copy()
        off += 8 * N
        inc = np.frombuffer(blob, dtype="<f8", count=N * n * m, offset=off).reshape(N, n, m).copy()
        return cls(dt, T, seed, inc, idx)

    def summary_csv(self, model=None) -> str:
        """One line per path: index, start, end and (if a model is given) distance."""
        buf = io.StringIO()
        m = self.m
        cols = ["index"] + [f"x0_{i}" for i in range(m)] + [f"xT_{i}" for i in range(m)]
        if model is not None:
            cols.append("distance")
        buf.write(",".join(cols) + "\n")
        d = None if model is None or self.x is None else model.distance(self.x[:, 0], self.x[:, -1])
        for j, i in enumerate(self.indices):
            row = [str(int(i))] + [repr(float(v)) for v in self.x[j, 0]] + [repr(float(v)) for v in self.x[j, -1]]
            if d is not None:
                row.append(repr(float(d[j])))
            buf.write(",".join(row) + "\n")
        return buf.getvalue()


def gram_schmidt(model, x, U):
    return geo.gram_schmidt(model, x, U)


def initial_frame(model, x0, N=None):
    x0 = np.asarray(x0, dtype=float)
    u0 = geo.orthonormal_frame(model, x0)
    if N is None:
        return u0
    return np.broadcast_to(u0, (N,) + u0.shape).copy(), np.broadcast_to(x0, (N,) + x0.shape).copy()


def bm_step(model, x, u, dB, reorthonormalize=True):
    """One geodesic step; returns (x, u, pre-correction frame defect)."""
    v = np.einsum("...ij,...j->...i", u, dB)
    x1, _, u1 = model.exp_transport(x, v, u)
    if not reorthonormalize:
        return x1, u1, 0.0
    d = float(np.max(geo.frame_defect(model, x1, u1))) if x1.size else 0.0
    return x1, geo.gram_schmidt(model, x1, u1), d


def develop(model, x0, u0, increments, store=True, reorthonormalize=True):
    """Run bm_step over increments of shape (N, n, m); returns x, u paths and max defect."""
    increments = np.asarray(increments, dtype=float)
    N, n, m = increments.shape
    x = np.array(np.broadcast_to(x0, (N, m)), dtype=float)
    u = np.array(np.broadcast_to(u0, (N, m, m)), dtype=float)
    if store:
        xs = np.empty((N, n + 1, m))
        us = np.empty((N, n + 1, m, m))
        xs[:, 0], us[:, 0] = x, u
    defect = 0.0
    for k in range(n):
        x, u, d = bm_step(model, x, u, increments[:, k], reorthonormalize)
        defect = max(defect, d)
        if store:
            xs[:, k + 1], us[:, k + 1] = x, u
    if not np.all(model.in_domain(x)):
        raise geo.DomainError("path left the chart domain")
    if store:
        return xs, us, defect
    return x, u, defect


def antidevelop(model, u0, points):
    """Driving increments of a piecewise-geodesic path (points shape (N, n + 1, m))."""
    points = np.asarray(points, dtype=float)
    u = np.array(u0, dtype=float)
    if u.ndim == 2:
        u = np.broadcast_to(u, (points.shape[0],) + u.shape).copy()
    out = np.empty((points.shape[0], points.shape[1] - 1, points.shape[2]))
    for k in range(points.shape[1] - 1):
        v = model.log(points[:, k], points[:, k + 1])
        out[:, k] = np.linalg.solve(u, v[..., None])[..., 0]
        u = model.exp_transport(points[:, k], v, u)[2]
    return out


def simulate_paths(model, x0, T, dt, seed, indices, u0=None, store=True):
    """Brownian paths for the given stream indices."""
    n = int(round(T / dt))
    indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    dB = rng.increments(seed, indices, n, model.m, dt)
    if u0 is None:
        u0 = initial_frame(model, x0)
    xs, us, defect = develop(model, x0, u0, dB, store=store)
    if store:
        return PathBundle(dt, T, seed, dB, indices, xs, us, max_defect=defect)
    return PathBundle(dt, T, seed, dB, indices, xs[:, None], us[:, None], max_defect=defect)


# ---------------------------------------------------------------------------
# tangent flow


def curvature_action(Rf, a, b):
    """Matrix w -> R(a, b) w in frame coordinates; Rf[..., a, b, c, d]."""
    return np.einsum("...abcd,...a,...b->...dc", Rf, a, b)


def constant_curvature_action(K, a, b):
    """R(a, b) w = K(<b, w> a - <a, w> b) as a matrix acting on w."""
    return K * (a[..., :, None] * b[..., None, :] - b[..., :, None] * a[..., None, :])


@dataclass
class TangentFlowState:
    z: np.ndarray
    Z: np.ndarray


def _frame_curv(model, x, u):
    if model.constant_curvature is not None:
        return None
    return model.frame_curvature(x, u)


def _dZ(model, Rf, dB, z):
    if Rf is None:
        return constant_curvature_action(model.constant_curvature, dB, z)
    return curvature_action(Rf, dB, z)


def tangent_flow_step(model, tf: TangentFlowState, x0, u0, x1, u1, dB, extra=None):
    """Heun step of dz = Z o dB, dZ = R(o dB, z) (+ extra(x, u, dB)) in frame coordinates."""
    R0 = _frame_curv(model, x0, u0)
    R1 = _frame_curv(model, x1, u1)
    f0z = np.einsum("...ij,...j->...i", tf.Z, dB)
    f0Z = _dZ(model, R0, dB, tf.z)
    if extra is not None:
        f0Z = f0Z + extra(x0, u0, dB)
    zp = tf.z + f0z
    Zp = tf.Z + f0Z
    f1z = np.einsum("...ij,...j->...i", Zp, dB)
    f1Z = _dZ(model, R1, dB, zp)
    if extra is not None:
        f1Z = f1Z + extra(x1, u1, dB)
    return TangentFlowState(tf.z + 0.5 * (f0z + f1z), tf.Z + 0.5 * (f0Z + f1Z))


def tangent_flow(model, xs, us, increments, z0, Z0, extra=None, store=False):
    """Integrate the tangent flow along stored paths; returns the final state (or all)."""
    N, n, m = increments.shape
    tf = TangentFlowState(np.array(np.broadcast_to(z0, (N, m)), dtype=float),
                          np.array(np.broadcast_to(Z0, (N, m, m)), dtype=float))
    hist = [tf] if store else None
    for k in range(n):
        tf = tangent_flow_step(model, tf, xs[:, k], us[:, k], xs[:, k + 1], us[:, k + 1],
                               increments[:, k], extra)
        if store:
            hist.append(tf)
    return hist if store else tf


def perturbed_frame(model, x0, u0, z0, Z0, eps):
    """Move (x0, u0) by eps along the frame-bundle vector with coordinates (z0, Z0)."""
    from scipy.linalg import expm

    v = np.einsum("...ij,...j->...i", u0, eps * np.asarray(z0, dtype=float))
    x1, _, u1 = model.exp_transport(x0, v, u0)
    return x1, u1 @ expm(eps * np.asarray(Z0, dtype=float))


def holonomy_angle(model, vertices, v=None):
    """Rotation angle of transport around the closed geodesic polygon (2D)."""
    vertices = np.asarray(vertices, dtype=float)
    pts = np.concatenate([vertices, vertices[:1]], axis=0)
    if v is None:
        v = np.array([1.0, 0.0]) / np.sqrt(model.metric(vertices[0])[0, 0])
    w = geo.parallel_transport(model, pts, v)
    u = geo.orthonormal_frame(model, vertices[0])
    a = np.linalg.solve(u, v)
    b = np.linalg.solve(u, w)
    return float(np.arctan2(a[0] * b[1] - a[1] * b[0], a @ b))


def endpoint_derivative(model, x0, z0, Z0, T, dt, seed, indices, eps=1e-5):
    """Endpoint derivative along (z0, Z0) by the tangent flow and by a coupled difference.

    Both use the same increments; the difference is central in eps.  Returns
    (tangent, fd, endpoints), all as chart vectors at x_T.
    """
    n = int(round(T / dt))
    dB = rng.increments(seed, indices, n, model.m, dt)
    u0 = initial_frame(model, x0)
    xs, us, _ = develop(model, x0, u0, dB)
    tf = tangent_flow(model, xs, us, dB, z0, Z0)
    tangent = np.einsum("nij,nj->ni", us[:, -1], tf.z)
    ends = []
    for e in (eps, -eps):
        x1, u1 = perturbed_frame(model, x0, u0, z0, Z0, e)
        ends.append(develop(model, x1, u1, dB, store=False)[0])
    return tangent, (ends[0] - ends[1]) / (2 * eps), xs[:, -1]


def tangent_flow_convergence(model, x0, z0, Z0, T, dts, N, seed):
    """Median |tangent - fd| at each dt and the fitted log-log slope.

    The median is used because the pathwise error has heavy tails.
    """
    errs = []
    for dt in dts:
        tangent, fd, xT = endpoint_derivative(model, x0, z0, Z0, T, dt, seed, np.arange(N))
        d = fd - tangent
        errs.append(float(np.median(np.sqrt(model.inner(xT, d, d)))))
    slope = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    return np.array(errs), slope
