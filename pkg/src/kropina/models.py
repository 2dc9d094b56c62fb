"""Closed-form model spaces: Euclidean, odd spheres, flat cylinder, flat torus."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import MetricField, VectorField, constant_field, constant_metric
from .space import SpaceDefinition
from .zermelo import NavigationData

TWO_PI = 2 * math.pi
UNREACHABLE = math.inf


class ModelSpaceError(ValueError):
    pass


@dataclass(frozen=True)
class CutLocusCurve:
    samples: np.ndarray
    parameter: np.ndarray
    source: str
    branch: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __len__(self) -> int:
        return len(self.parameter)


# -- flat spaces with constant wind --------------------------------------------------

def _translation(W: np.ndarray):
    def flow(x, t):
        return np.asarray(x, dtype=float) + np.asarray(t, dtype=float)[..., None] * W

    def push(x, t, v):
        return np.array(np.broadcast_to(v, np.broadcast_shapes(np.shape(v), np.shape(x))), dtype=float)

    return flow, push


def _flat_space(name: str, kind: str, W, topology: tuple, cover: bool,
                quasi_regular: bool, period, params: dict) -> SpaceDefinition:
    W = np.array(W, dtype=float)
    n = W.shape[0]
    periods = np.array([np.nan if p is None or cover else p for p in topology])
    wrapped = ~np.isnan(periods)

    def wrap(d):
        d = np.array(d, dtype=float)
        if wrapped.any():
            d[..., wrapped] -= periods[wrapped] * np.round(d[..., wrapped] / periods[wrapped])
        return d

    def h_distance(p, q):
        return np.linalg.norm(wrap(np.asarray(q, dtype=float) - np.asarray(p, dtype=float)), axis=-1)

    def h_directions(p, q, tol=1e-9):
        p = np.asarray(p, dtype=float)
        base = p + wrap(np.asarray(q, dtype=float) - p)
        reps = [base]
        for i in np.flatnonzero(wrapped):
            reps = [r + k * periods[i] * np.eye(n)[i] for r in reps for k in (-1, 0, 1)]
        ds = [r - p for r in reps]
        lens = np.array([np.linalg.norm(d) for d in ds])
        best = lens.min()
        if best == 0:
            return []
        return [d / l for d, l in zip(ds, lens) if l <= best + tol]

    def h_geodesic(x0, v0, t):
        return np.asarray(x0, dtype=float) + t * np.asarray(v0, dtype=float)

    flow, push = _translation(W)
    zero = np.zeros((n, n))
    no_acc = np.zeros(n)
    no_acc.flags.writeable = False
    return SpaceDefinition(
        name=name, dim=n, metric=constant_metric(np.eye(n)), wind=constant_field(W),
        flow=flow, flow_pushforward=push, h_geodesic=h_geodesic,
        h_distance=h_distance, h_directions=h_directions,
        acceleration=lambda x, v: no_acc,
        topology=tuple(topology), cover=cover, quasi_regular=quasi_regular,
        flow_period=period, kind=kind, vectorized=True,
        params=dict(params, W=W, identity_metric=True,
                    wind_batch=lambda X: np.broadcast_to(W, np.shape(X)),
                    acceleration_jacobian=lambda x, v: (zero, zero), wrap=wrap),
    )


def euclidean_space(n: int, W) -> SpaceDefinition:
    W = np.array(W, dtype=float)
    if W.shape != (n,):
        raise ModelSpaceError(f"wind must have {n} components")
    if abs(np.linalg.norm(W) - 1.0) > 1e-12:
        raise ModelSpaceError(f"wind must be unit, |W| = {np.linalg.norm(W):.12g}")
    return _flat_space(f"euclidean:{n}", "euclidean", W, (None,) * n, False, False, None, {})


def cylinder_space(A: float, B: float, cover: bool = False) -> SpaceDefinition:
    if abs(math.hypot(A, B) - 1.0) > 1e-12:
        raise ModelSpaceError(f"(A, B) must be unit, got |(A,B)| = {math.hypot(A, B):.12g}")
    qr = (B == 0) and not cover
    return _flat_space(f"cylinder:{A},{B}", "cylinder", (A, B), (TWO_PI, None), cover,
                       qr, TWO_PI if qr else None, {"A": float(A), "B": float(B)})


def torus_space(cover: bool = False) -> SpaceDefinition:
    s = 1 / math.sqrt(2)
    return _flat_space("torus", "torus", (s, s), (TWO_PI, TWO_PI), cover,
                       not cover, 2 * math.sqrt(2) * math.pi if not cover else None, {})


# -- odd spheres in C^k --------------------------------------------------------------

def _rotate(x, t):
    """Multiply each complex pair (x_{2j}, x_{2j+1}) by e^{it}."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)[..., None]
    c, s = np.cos(t), np.sin(t)
    re, im = x[..., 0::2], x[..., 1::2]
    out = np.empty(np.broadcast_shapes(x.shape, t.shape[:-1] + (x.shape[-1],)))
    out[..., 0::2] = c * re - s * im
    out[..., 1::2] = s * re + c * im
    return out


def _hopf(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    out[..., 0::2] = -x[..., 1::2]
    out[..., 1::2] = x[..., 0::2]
    return out


def sphere_space(n: int = 3) -> SpaceDefinition:
    """Round S^n in R^(n+1) with the Hopf wind W_z = iz (n odd)."""
    if n < 3 or n % 2 == 0:
        raise ModelSpaceError(f"sphere dimension must be odd and >= 3, got {n}")
    D = n + 1
    hopf_matrix = _hopf(np.eye(D)).T  # W(x) = hopf_matrix @ x
    I = np.eye(D)

    def h_distance(p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        return 2 * np.arctan2(np.linalg.norm(q - p, axis=-1), np.linalg.norm(q + p, axis=-1))

    def frame(x):
        q, _ = np.linalg.qr(np.column_stack([x, I]))
        return q[:, 1:D]

    def h_directions(p, q, tol=1e-9):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        w = q - (p @ q) * p
        nw = np.linalg.norm(w)
        if nw > tol:
            return [w / nw]
        if p @ q > 0:
            return []
        return list(frame(p).T)  # antipodal: every direction minimizes

    def h_geodesic(x0, v0, t):
        s = np.linalg.norm(v0)
        return np.asarray(x0) * math.cos(s * t) + np.asarray(v0) / s * math.sin(s * t)

    def project(x, v):
        x = x / np.linalg.norm(x)
        return x, v - (x @ v) * x

    def chord(a, b, s):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        ang = h_distance(a, b)
        if ang < 1e-12:
            return a + s * (b - a)
        w = b - math.cos(ang) * a
        w = w / np.linalg.norm(w)
        return a * math.cos(s * ang) + w * math.sin(s * ang)

    return SpaceDefinition(
        name=f"sphere:{n}", dim=n, coord_dim=D,
        metric=constant_metric(I), wind=VectorField(D, _hopf, lambda x: hopf_matrix),
        flow=_rotate, flow_pushforward=lambda x, t, v: _rotate(v, t),
        h_geodesic=h_geodesic, h_distance=h_distance, h_directions=h_directions,
        acceleration=lambda x, v: -(v @ v) * x, project=project,
        tangent_frame=frame, chord=chord,
        quasi_regular=True, flow_period=TWO_PI, kind="sphere", vectorized=True,
        params={"identity_metric": True, "wind_batch": _hopf,
                "acceleration_jacobian": lambda x, v: (-(v @ v) * I, -2 * np.outer(x, v)),
                "normals": lambda x: x[:, None]},
    )


def stereographic_hopf_chart(n: int = 3) -> NavigationData:
    """Navigation data of the Hopf sphere S^n in the stereographic chart.

    The chart covers S^n minus the north pole; the origin is the south pole.
    """
    if n < 3 or n % 2 == 0:
        raise ModelSpaceError("stereographic Hopf chart needs odd n >= 3")

    def h(x):
        return 4.0 / (1.0 + x @ x) ** 2 * np.eye(n)

    def dh(x):
        c = -16.0 / (1.0 + x @ x) ** 3
        return np.einsum("ij,k->ijk", np.eye(n), c * x)

    def w(x):
        r2 = x @ x
        X = np.append(2 * x, r2 - 1) / (1 + r2)
        WX = _hopf(X)
        return 0.5 * (1 + r2) * (WX[:n] + x * WX[n])

    return NavigationData(MetricField(n, h, dh), VectorField(n, w))


def stereographic_point(X) -> np.ndarray:
    """Chart coordinates of an embedded sphere point (north pole excluded)."""
    X = np.asarray(X, dtype=float)
    return X[:-1] / (1 - X[-1])


# -- distances and cut loci -------------------------------------------------------------

def _require_model(space: SpaceDefinition):
    if space.kind not in ("euclidean", "sphere", "cylinder", "torus"):
        raise ModelSpaceError(f"{space.name} is not a model space")


def closed_form_distance(space: SpaceDefinition, p, q) -> float:
    """d_F(p, q) from the model formulas; math.inf when q is unreachable."""
    _require_model(space)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if space.kind == "sphere":
        return _sphere_distance(space, p, q)
    W = space.params["W"]
    best = UNREACHABLE
    for r in space.lifts(q):
        d = r - p
        c = float(d @ W)
        if not np.any(d):
            return 0.0
        if c > 0:
            best = min(best, float(d @ d) / (2 * c))
    return best


def _sphere_distance(space, p, q) -> float:
    if np.allclose(p, q, rtol=0, atol=1e-15):
        return 0.0

    def g(tau):
        return float(space.h_distance(p, _rotate(q, -tau))) - tau

    lo, hi = 0.0, math.pi
    if g(hi) > 0:  # cannot happen for points on the unit sphere
        raise ModelSpaceError("sphere fixed point not bracketed")
    while hi - lo > 1e-13:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return hi


def h_cut_locus(space: SpaceDefinition, p, sampling: int = 257) -> CutLocusCurve:
    """Riemannian cut locus of p (meridian, cross, antipode)."""
    _require_model(space)
    p = np.asarray(p, dtype=float)
    if space.kind == "euclidean":
        return CutLocusCurve(np.zeros((0, space.coord_dim)), np.zeros(0), "analytic")
    if space.kind == "sphere":
        return CutLocusCurve(np.array([-p]), np.zeros(1), "analytic", np.zeros(1, dtype=int))
    if space.kind == "cylinder":
        v = np.linspace(-4 * math.pi, 4 * math.pi, sampling)
        pts = p + np.column_stack([np.full_like(v, math.pi), v])
        return CutLocusCurve(pts, v, "analytic", np.zeros(sampling, dtype=int))
    u = np.linspace(0.0, TWO_PI, sampling)
    pi = np.full_like(u, math.pi)
    pts = p + np.vstack([np.column_stack([u, pi]), np.column_stack([pi, u])])
    return CutLocusCurve(pts, np.concatenate([u, u]), "analytic",
                         np.repeat([0, 1], sampling))


def _nearest(u):
    return u - TWO_PI * np.round(u / TWO_PI)


def cut_locus(space: SpaceDefinition, p, sampling: int = 257) -> CutLocusCurve:
    """F-cut locus of p from the closed-form twisted curves."""
    _require_model(space)
    p = np.asarray(p, dtype=float)
    if space.kind == "euclidean":
        return CutLocusCurve(np.zeros((0, space.coord_dim)), np.zeros(0), "analytic")
    if space.kind == "sphere":
        return CutLocusCurve(np.array([p]), np.zeros(1), "analytic", np.zeros(1, dtype=int))
    if space.kind == "cylinder":
        A, B = space.params["A"], space.params["B"]
        v = np.linspace(-4 * math.pi, 4 * math.pi, sampling)
        L = np.sqrt(math.pi**2 + v**2)
        pts = p + np.column_stack([math.pi + A * L, v + B * L])
        return CutLocusCurve(pts, v, "analytic", np.zeros(sampling, dtype=int))
    # torus: twist each h-cut point by its distance to the nearest lift of p
    u = np.linspace(0.0, TWO_PI, sampling)
    off = np.sqrt(_nearest(u) ** 2 + math.pi**2) / math.sqrt(2)
    first = np.column_stack([u + off, math.pi + off])
    second = np.column_stack([math.pi + off, u + off])
    return CutLocusCurve(p + np.vstack([first, second]), np.concatenate([u, u]), "analytic",
                         np.repeat([0, 1], sampling))


def twist_h_cut_locus(space: SpaceDefinition, p, h_cut_samples) -> CutLocusCurve:
    """Map each h-cut point q to phi_{d_h(p, q)}(q)."""
    if space.h_distance is None or space.flow is None:
        raise ModelSpaceError("twisting needs closed-form h_distance and flow")
    p = np.asarray(p, dtype=float)
    pts = np.array([space.flow(q, float(space.h_distance(p, q))) for q in h_cut_samples])
    pts = pts.reshape(len(h_cut_samples), space.coord_dim)
    return CutLocusCurve(pts, np.arange(len(pts), dtype=float), "h_cut_twisted")
