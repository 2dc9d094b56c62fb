"""Riemannian geodesics, the wind flow, and the Kropina geodesics built from them.

A Kropina geodesic from p with F(p, y0) = 1 is P(t) = phi_t(rho(t)), where
phi is the flow of W and rho is the unit h-geodesic with rho'(0) = y0 - W(p).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import GeometryError, as_point
from .space import SpaceDefinition
from .zermelo import ConicDomainError, F, kropina_gradient

TOL_INT = 1e-7
TOL_UNIT_SPEED = 1e-6
DEFAULT_STEPS = 1024


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PathSample:
    params: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    f_values: np.ndarray
    admissible: np.ndarray
    scale: float = 1.0        # F(p, y0) of the caller's initial vector
    rescaled: bool = False    # initial vector was renormalized
    truncated: bool = False   # left the declared chart box

    def __len__(self) -> int:
        return len(self.params)

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]


@dataclass(frozen=True)
class ConjugateReport:
    parameters: list
    jacobi_norm_trace: np.ndarray  # rows (t, smallest Jacobi field norm)
    method: str
    points: list


# -- helpers -------------------------------------------------------------------

def _h_norm(space: SpaceDefinition, x, v) -> float:
    if space.params.get("identity_metric"):
        return float(np.linalg.norm(v))
    return math.sqrt(float(v @ space.metric.eval(x) @ v))


def _f_many(space: SpaceDefinition, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """F at many (x, y) pairs; inf where inadmissible."""
    if space.params.get("identity_metric") and space.params.get("wind_batch"):
        Wb = space.params["wind_batch"](X)
        yy = np.einsum("ij,ij->i", Y, Y)
        beta = np.einsum("ij,ij->i", Y, Wb)
        ok = beta > 1e-12 * yy + 1e-300
        out = np.full(len(X), math.inf)
        out[ok] = yy[ok] / (2 * beta[ok])
        return out
    nav = space.nav
    return np.array([F(nav, x, y) for x, y in zip(X, Y)])


def _outside_box(space: SpaceDefinition, x: np.ndarray) -> bool:
    if space.box is None:
        return False
    low, high = space.box
    for i, per in enumerate(space.topology):
        if per is None and not (low[i] <= x[i] <= high[i]):
            return True
    return False


def _rk4_geodesic(space: SpaceDefinition, x0, v0, t_max: float, steps: int):
    h = t_max / steps
    n = space.coord_dim
    xs = np.empty((steps + 1, n))
    vs = np.empty((steps + 1, n))
    x = np.array(x0, dtype=float)
    v = np.array(v0, dtype=float)
    xs[0], vs[0] = x, v
    acc = space.geodesic_acceleration
    proj = space.project
    last = steps
    truncated = False
    for k in range(steps):
        a1 = acc(x, v)
        x2, v2 = x + 0.5 * h * v, v + 0.5 * h * a1
        a2 = acc(x2, v2)
        x3, v3 = x + 0.5 * h * v2, v + 0.5 * h * a2
        a3 = acc(x3, v3)
        x4, v4 = x + h * v3, v + h * a3
        a4 = acc(x4, v4)
        x = x + h / 6 * (v + 2 * v2 + 2 * v3 + v4)
        v = v + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        if proj is not None:
            x, v = proj(x, v)
        # overflow of the squared norms also counts as blowing up
        if not math.isfinite(float(x @ x) + float(v @ v)):
            raise IntegrationError(f"geodesic blew up near t={(k + 1) * h:.6g}")
        if _outside_box(space, x):
            last, truncated = k, True
            break
        xs[k + 1], vs[k + 1] = x, v
    params = np.linspace(0.0, t_max, steps + 1)
    return params[:last + 1], xs[:last + 1], vs[:last + 1], truncated


# -- operations -----------------------------------------------------------------

def integrate_h_geodesic(space: SpaceDefinition, x0, v0, t_max: float,
                         steps: int = DEFAULT_STEPS) -> PathSample:
    """Unit-speed h-geodesic by fixed-step RK4."""
    if steps < 16:
        raise ValueError("steps must be at least 16")
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    x0 = as_point(x0, space.coord_dim)
    v0 = as_point(v0, space.coord_dim)
    speed = _h_norm(space, x0, v0)
    rescaled = abs(speed - 1.0) > 1e-9
    if rescaled:
        if speed == 0:
            raise ValueError("zero initial velocity")
        v0 = v0 / speed
    params, xs, vs, truncated = _rk4_geodesic(space, x0, v0, t_max, steps)
    fv = _f_many(space, xs, vs)
    return PathSample(params, xs, vs, fv, np.isfinite(fv), speed, rescaled, truncated)


def integrate_flow(space: SpaceDefinition, x0, t: float) -> np.ndarray:
    x0 = as_point(x0, space.coord_dim)
    if space.flow is not None:
        return np.asarray(space.flow(x0, t), dtype=float)
    if t == 0:
        return x0.copy()
    steps = max(1, math.ceil(abs(t) / (1e-3 * max(1.0, abs(t)))))
    h = t / steps
    x = x0.copy()
    W = space.wind.eval
    for _ in range(steps):
        k1 = W(x)
        k2 = W(x + 0.5 * h * k1)
        k3 = W(x + 0.5 * h * k2)
        k4 = W(x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if _outside_box(space, x):
            raise IntegrationError(f"flow left the chart box at {x.tolist()}")
    return x


def _flow_batch(space: SpaceDefinition, X: np.ndarray, t: np.ndarray) -> np.ndarray:
    """phi_{t_k}(X_k) for all k in one RK4 loop (needs a batched wind)."""
    W = space.params["wind_batch"]
    T = float(np.max(np.abs(t))) if len(t) else 0.0
    if T == 0:
        return X.copy()
    steps = max(1, math.ceil(T / (1e-3 * max(1.0, T))))
    h = (t / steps)[:, None]
    x = X.copy()
    for _ in range(steps):
        k1 = W(x)
        k2 = W(x + 0.5 * h * k1)
        k3 = W(x + 0.5 * h * k2)
        k4 = W(x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    if space.box is not None and any(_outside_box(space, p) for p in x):
        raise IntegrationError("flow left the chart box")
    return x


def _flow_pushforward_batch(space: SpaceDefinition, X, t, V) -> tuple:
    """Flowed points and pushed-forward vectors by one batched integration."""
    nv = np.linalg.norm(V, axis=1)
    scale = np.maximum(1.0, np.max(np.abs(X), axis=1))
    eps = np.where(nv > 0, 1e-6 * scale / np.where(nv > 0, nv, 1.0), 0.0)[:, None]
    out = _flow_batch(space, np.vstack([X, X + eps * V, X - eps * V]), np.tile(t, 3))
    n = len(X)
    U = np.where(eps > 0, (out[n:2 * n] - out[2 * n:]) / np.where(eps > 0, 2 * eps, 1.0), 0.0)
    return out[:n], U


def flow_pushforward(space: SpaceDefinition, x, t: float, v) -> np.ndarray:
    """(phi_t)_* v at x."""
    if space.flow_pushforward is not None:
        return np.asarray(space.flow_pushforward(x, t, v), dtype=float)
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    nv = float(np.linalg.norm(v))
    if nv == 0:
        return np.zeros_like(v)
    eps = 1e-6 * max(1.0, float(np.max(np.abs(x)))) / nv
    return (integrate_flow(space, x + eps * v, t) - integrate_flow(space, x - eps * v, t)) / (2 * eps)


def _normalize_initial(space: SpaceDefinition, p, y0):
    p = as_point(p, space.coord_dim)
    y0 = as_point(y0, space.coord_dim)
    lam = F(space.nav, p, y0)
    if not math.isfinite(lam):
        raise ConicDomainError("initial vector is not admissible (h(y, W) <= 0)")
    y1 = y0 / lam
    if _h_norm(space, p, y1) < 1e-9:
        raise ConicDomainError("degenerate direction: v = -W")
    v = y1 - space.wind.eval(p)
    return p, y1, v, lam


def kropina_geodesic(space: SpaceDefinition, p, y0, t_max: float,
                     steps: int = DEFAULT_STEPS) -> PathSample:
    """F-unit-speed geodesic P(t) = phi_t(rho(t)) on [0, t_max]."""
    p, y1, v, lam = _normalize_initial(space, p, y0)
    rho = integrate_h_geodesic(space, p, v, t_max, steps)
    t = rho.params
    if space.vectorized and space.flow is not None and space.flow_pushforward is not None:
        P = space.flow(rho.points, t)
        U = space.flow_pushforward(rho.points, t, rho.velocities)
        Wp = space.params["wind_batch"](P)
    elif space.flow is None and "wind_batch" in space.params:
        P, U = _flow_pushforward_batch(space, rho.points, t, rho.velocities)
        Wp = space.params["wind_batch"](P)
    else:
        P = np.array([integrate_flow(space, x, s) for x, s in zip(rho.points, t)])
        U = np.array([flow_pushforward(space, x, s, u)
                      for x, s, u in zip(rho.points, t, rho.velocities)])
        Wp = np.array([space.wind.eval(x) for x in P])
    V = Wp + U
    fv = _f_many(space, P, V)
    return PathSample(t, P, V, fv, np.isfinite(fv), lam, lam != 1.0, rho.truncated)


def h_exponential(space: SpaceDefinition, x, w, steps: int = DEFAULT_STEPS) -> np.ndarray:
    """e_x(w): closed form when the space has one, else RK4."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    s = _h_norm(space, x, w)
    if s == 0:
        return x.copy()
    if space.h_geodesic is not None:
        return np.asarray(space.h_geodesic(x, w / s, s), dtype=float)
    return integrate_h_geodesic(space, x, w / s, s, steps).end


def kropina_exponential(space: SpaceDefinition, p, y, t: float = 1.0,
                        steps: int = DEFAULT_STEPS) -> np.ndarray:
    """exp_p(t y) = phi_t(e_p(t (y - W))) after normalizing F(p, y) = 1."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    p = as_point(p, space.coord_dim)
    if t == 0 or not np.any(y):
        return p.copy()
    p, y1, v, lam = _normalize_initial(space, p, y)
    s = t * lam
    return integrate_flow(space, h_exponential(space, p, s * v, steps), s)


# -- Jacobi fields ----------------------------------------------------------------

def _acc_jacobians(space: SpaceDefinition, x, v):
    jac = space.params.get("acceleration_jacobian")
    if jac is not None:
        return jac(x, v)
    n = len(x)
    acc = space.geodesic_acceleration
    hx = 1e-5 * max(1.0, float(np.max(np.abs(x))))
    hv = 1e-5 * max(1.0, float(np.max(np.abs(v))))
    Ax = np.empty((n, n))
    Av = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = hx
        Ax[:, k] = (acc(x + e, v) - acc(x - e, v)) / (2 * hx)
        e = np.zeros(n)
        e[k] = hv
        Av[:, k] = (acc(x, v + e) - acc(x, v - e)) / (2 * hv)
    return Ax, Av


def _jacobi_rhs(space, state, m):
    n = space.coord_dim
    x, v = state[:n], state[n:2 * n]
    J = state[2 * n:2 * n + n * m].reshape(n, m)
    Jd = state[2 * n + n * m:].reshape(n, m)
    Ax, Av = _acc_jacobians(space, x, v)
    a = space.geodesic_acceleration(x, v)
    return np.concatenate([v, a, Jd.ravel(), (Ax @ J + Av @ Jd).ravel()])


def _jacobi_step(space, state, h, m):
    k1 = _jacobi_rhs(space, state, m)
    k2 = _jacobi_rhs(space, state + 0.5 * h * k1, m)
    k3 = _jacobi_rhs(space, state + 0.5 * h * k2, m)
    k4 = _jacobi_rhs(space, state + h * k3, m)
    out = state + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    if space.project is not None:
        n = space.coord_dim
        x, v = space.project(out[:n], out[n:2 * n])
        out[:n], out[n:2 * n] = x, v
    return out


def _jacobi_measures(space, state, m):
    """(determinant with the velocity column, smallest singular value)."""
    n = space.coord_dim
    x, v = state[:n], state[n:2 * n]
    J = state[2 * n:2 * n + n * m].reshape(n, m)
    if space.coord_dim > space.dim:
        normals = space.params["normals"](x)
        M = np.column_stack([J, v, normals])
        sig = np.linalg.svd(J, compute_uv=False)
    else:
        L = np.linalg.cholesky(space.metric.eval(x))
        M = np.column_stack([L.T @ J, L.T @ v])
        sig = np.linalg.svd(L.T @ J, compute_uv=False)
    return float(np.linalg.det(M)), float(sig[-1])


def jacobi_conjugate_search(space: SpaceDefinition, p, y0, t_max: float,
                            steps: Optional[int] = None,
                            tol: float = 1e-6) -> ConjugateReport:
    """Conjugate parameters along the Kropina geodesic from (p, y0).

    Jacobi fields of the h-geodesic rho with J(0) = 0 and J'(0) running over an
    orthonormal basis of the complement of rho'(0) are integrated through the
    linearized geodesic equation. A zero shows up either as a sign change of
    the determinant or as a dip of the smallest singular value to zero; the
    latter catches the even-multiplicity zeros a determinant cannot see.
    """
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    p, y1, v, _ = _normalize_initial(space, p, y0)
    n = space.coord_dim
    m = space.dim - 1
    if m < 1:
        return ConjugateReport([], np.zeros((0, 2)), "numerical", [])
    if steps is None:
        steps = max(DEFAULT_STEPS, math.ceil(t_max / 0.01))
    h = t_max / steps
    # initial Jacobi derivatives: orthonormal complement of v in the tangent frame
    E = space.frame(p)
    H = space.metric.eval(p)
    c = E.T @ H @ v
    q, _ = np.linalg.qr(np.column_stack([c, np.eye(len(c))]))
    E0 = E @ q[:, 1:m + 1]
    state = np.concatenate([p, v, np.zeros(n * m), E0.ravel()])

    states = [state]
    dets = [0.0]
    sig = [0.0]
    for _ in range(steps):
        state = _jacobi_step(space, state, h, m)
        if not np.all(np.isfinite(state)):
            raise IntegrationError("Jacobi integration blew up")
        d, s = _jacobi_measures(space, state, m)
        states.append(state)
        dets.append(d)
        sig.append(s)
    ts = np.linspace(0.0, t_max, steps + 1)
    sig_arr = np.array(sig)
    scale = max(1.0, float(np.max(sig_arr)))

    def state_at(t):
        k = min(int(t / h), steps)
        st = states[k]
        dt = t - ts[k]
        if dt > 0:
            st = _jacobi_step(space, st, dt, m)
        return st

    found = []
    for k in range(1, steps):
        if dets[k] == 0.0 or dets[k] * dets[k + 1] < 0:
            lo, hi = ts[k], ts[k + 1]
            dlo = dets[k]
            if dlo == 0.0:
                found.append(ts[k])
                continue
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                dm, _ = _jacobi_measures(space, state_at(mid), m)
                if dm * dlo > 0:
                    lo, dlo = mid, dm
                else:
                    hi = mid
            found.append(0.5 * (lo + hi))
    for k in range(1, steps + 1):
        left = sig[k - 1]
        right = sig[k + 1] if k < steps else math.inf
        if sig[k] <= left and sig[k] < right and sig[k] < 0.05 * scale:
            lo, hi = ts[k - 1], ts[min(k + 1, steps)]
            g = (math.sqrt(5) - 1) / 2
            a, b = hi - g * (hi - lo), lo + g * (hi - lo)
            fa = _jacobi_measures(space, state_at(a), m)[1]
            fb = _jacobi_measures(space, state_at(b), m)[1]
            while hi - lo > tol / 10:
                if fa < fb:
                    hi, b, fb = b, a, fa
                    a = hi - g * (hi - lo)
                    fa = _jacobi_measures(space, state_at(a), m)[1]
                else:
                    lo, a, fa = a, b, fb
                    b = lo + g * (hi - lo)
                    fb = _jacobi_measures(space, state_at(b), m)[1]
            tm = 0.5 * (lo + hi)
            if _jacobi_measures(space, state_at(tm), m)[1] <= 1e-4 * scale:
                found.append(tm)
    params = []
    for t in sorted(found):
        if 0 < t <= t_max and not any(abs(t - u) < 1e-4 for u in params):
            params.append(t)
    points = []
    for t in params:
        rho_t = state_at(t)[:n]
        points.append(integrate_flow(space, rho_t, t))
    trace = np.column_stack([ts, sig_arr])
    return ConjugateReport(params, trace, "numerical", points)


# -- Gauss lemma ------------------------------------------------------------------

def gauss_orthogonality(space: SpaceDefinition, p, y, V, tau: float,
                        steps: int = DEFAULT_STEPS) -> float:
    """|g_T((exp_p)_* V, T)| at tau*y, T the geodesic velocity there."""
    p = as_point(p, space.coord_dim)
    y = as_point(y, space.coord_dim)
    V = as_point(V, space.coord_dim)
    nav = space.nav
    r = F(nav, p, y)
    if not math.isfinite(r):
        raise ConicDomainError("y is not admissible")
    grad = kropina_gradient(nav, p, y)
    V = V - (grad @ V) / (grad @ y) * y
    w = tau * y
    eps = 1e-5 * _h_norm(space, p, w) / max(_h_norm(space, p, V), 1e-300)
    X = (kropina_exponential(space, p, w + eps * V, 1.0, steps)
         - kropina_exponential(space, p, w - eps * V, 1.0, steps)) / (2 * eps)
    # only the endpoint of P is needed: P(s) = phi_s(rho(s))
    _, _, v, _ = _normalize_initial(space, p, y / r)
    s = r * tau
    rho = integrate_h_geodesic(space, p, v, s, steps)
    x_end = integrate_flow(space, rho.end, s)
    T = r * (space.wind.eval(x_end) + flow_pushforward(space, rho.end, s, rho.velocities[-1]))
    return abs(F(nav, x_end, T) * float(kropina_gradient(nav, x_end, T) @ X))
