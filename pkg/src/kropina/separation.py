"""The separation d_F as the smallest fixed point of delta(tau) = d_h(p, phi_{-tau}(q)).

delta is 1-Lipschitz because the flow is a unit-speed isometry, so
g = delta - tau is nonincreasing. The scan looks for the first tau with g <= 0
and bisection then pins the boundary of {g > 0}.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geodesics import h_exponential, integrate_flow
from .space import SpaceDefinition
from .zermelo import F

TOL_FP = 1e-8
FINITE = "FINITE"
UNREACHABLE = "UNREACHABLE"
SAME_POINT = "SAME_POINT"


class ShootingError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class SeparationResult:
    status: str
    value: float
    tau_star: float
    initial_direction: Optional[np.ndarray]
    evaluations: int
    bracket_history: list
    capped: bool = False
    directions: list = field(default_factory=list)

    @property
    def finite(self) -> bool:
        return self.status in (FINITE, SAME_POINT)


# -- h-distance --------------------------------------------------------------------

def shoot(space: SpaceDefinition, p, q, steps: int = 256, max_iter: int = 50):
    """Two-point solve e_p(w) = q by damped Newton; returns (d_h, unit direction).

    Newton finds *a* geodesic, usually the minimizing one when started from
    the chart chord; it can converge to a longer geodesic on curved charts.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    H = space.metric.eval(p)

    def resid(w):
        return space.wrap_difference(h_exponential(space, p, w, steps) - q)

    w = space.wrap_difference(q - p)
    if not np.any(w):
        return 0.0, None
    r = resid(w)
    tol = 1e-11 * max(1.0, float(np.max(np.abs(q))))
    for _ in range(max_iter):
        nr = float(np.linalg.norm(r))
        if nr <= tol:
            break
        n = len(w)
        J = np.empty((n, n))
        eps = 1e-6 * max(1.0, float(np.linalg.norm(w)))
        for k in range(n):
            e = np.zeros(n)
            e[k] = eps
            J[:, k] = (resid(w + e) - resid(w - e)) / (2 * eps)
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            raise ShootingError("singular shooting Jacobian", nr) from None
        lam = 1.0
        while lam > 1e-4:
            r_new = resid(w - lam * step)
            if np.linalg.norm(r_new) < nr:
                break
            lam /= 2
        w = w - lam * step
        r = r_new
    else:
        raise ShootingError("shooting did not converge", float(np.linalg.norm(r)))
    if float(np.linalg.norm(r)) > tol:
        raise ShootingError("shooting did not converge", float(np.linalg.norm(r)))
    d = math.sqrt(float(w @ H @ w))
    return d, w / d


def h_distance(space: SpaceDefinition, p, q) -> float:
    if space.h_distance is not None:
        return float(space.h_distance(p, q))
    return shoot(space, p, q)[0]


def h_directions(space: SpaceDefinition, p, q, tol: float = 1e-7) -> list:
    if space.h_directions is not None:
        return list(space.h_directions(p, q, tol))
    _, v = shoot(space, p, q)
    return [] if v is None else [v]


def delta(space: SpaceDefinition, p, q, tau: float) -> float:
    return h_distance(space, p, integrate_flow(space, q, -tau))


def _delta_many(space: SpaceDefinition, p, q, taus: np.ndarray) -> np.ndarray:
    if space.vectorized and space.flow is not None and space.h_distance is not None:
        return np.asarray(space.h_distance(p, space.flow(q, -taus)), dtype=float)
    return np.array([delta(space, p, q, t) for t in taus])


# -- fixed-point solve ---------------------------------------------------------------

def separation(space: SpaceDefinition, p, q, cap: float = 64.0,
               horizon: float = 1e4, block: int = 512) -> SeparationResult:
    """d_F(p, q) via the smallest fixed point of delta.

    On spaces without a quasi-regular wind the uniform scan stops at
    cap*(1+delta(0)); beyond it the bracket is searched by doubling up to
    horizon*(1+delta(0)). Failing that the result is UNREACHABLE with
    ``capped`` set, as no proof of unreachability is available.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if space.same_point(p, q):
        return SeparationResult(SAME_POINT, 0.0, 0.0, None, 0, [])
    history = []
    evals = 0

    def g_many(taus):
        nonlocal evals
        d = _delta_many(space, p, q, taus)
        evals += len(taus)
        history.extend(zip(taus.tolist(), d.tolist()))
        return d - taus

    d0 = float(g_many(np.array([0.0]))[0])
    dtau = max(0.01, d0 / 64)
    if space.quasi_regular and space.flow_period:
        tau_max = d0 + space.flow_period
    else:
        tau_max = cap * (1 + d0)
    nsteps = math.ceil(tau_max / dtau)
    if not (space.vectorized and space.h_distance is not None):
        block = min(block, 8)  # each evaluation is a shooting solve
    grid = np.minimum(np.arange(1, nsteps + 1) * dtau, tau_max)

    bracket = None
    prev_tau, prev_g = 0.0, d0
    for start in range(0, nsteps, block):
        taus = grid[start:start + block]
        g = g_many(taus)
        hit = np.flatnonzero(g <= 0)
        stop = hit[0] if hit.size else len(taus)
        # a positive dip below dtau could hide a tangential zero; look closer
        for k in range(stop):
            gk = g[k]
            g_left = prev_g if k == 0 else g[k - 1]
            g_right = g[k + 1] if k + 1 < len(g) else -math.inf
            if 0 < gk < dtau and gk < g_left and gk <= g_right:
                lo = prev_tau if k == 0 else taus[k - 1]
                hi = taus[k + 1] if k + 1 < len(taus) else taus[k]
                tm, gm = _golden_min(lambda t: float(g_many(np.array([t]))[0]), lo, hi)
                if gm <= 0:
                    bracket = (lo, tm)
                    break
        if bracket is not None:
            break
        if hit.size:
            k = hit[0]
            lo = prev_tau if k == 0 else float(taus[k - 1])
            bracket = (lo, float(taus[k]))
            break
        prev_tau, prev_g = float(taus[-1]), float(g[-1])

    capped = False
    if bracket is None and not space.quasi_regular:
        tau = tau_max
        limit = horizon * (1 + d0)
        while tau < limit:
            nxt = min(2 * tau, limit)
            if g_many(np.array([nxt]))[0] <= 0:
                bracket = (tau, nxt)
                break
            tau = nxt
    if bracket is None:
        capped = True
        return SeparationResult(UNREACHABLE, math.inf, math.nan, None, evals, history, capped)

    lo, hi = bracket
    while hi - lo > TOL_FP / 4:
        mid = 0.5 * (lo + hi)
        if g_many(np.array([mid]))[0] > 0:
            lo = mid
        else:
            hi = mid
    tau_star = hi
    q_minus = integrate_flow(space, q, -tau_star)
    Wp = space.wind.eval(p)
    dirs = [v + Wp for v in h_directions(space, p, q_minus, tol=1e-6 * (1 + tau_star))]
    return SeparationResult(FINITE, tau_star, tau_star, dirs[0] if dirs else None,
                            evals, history, False, dirs)


def _golden_min(f, lo, hi, tol=1e-10):
    g = (math.sqrt(5) - 1) / 2
    a, b = hi - g * (hi - lo), lo + g * (hi - lo)
    fa, fb = f(a), f(b)
    while hi - lo > tol:
        if fa < fb:
            hi, b, fb = b, a, fa
            a = hi - g * (hi - lo)
            fa = f(a)
        else:
            lo, a, fa = a, b, fb
            b = lo + g * (hi - lo)
            fb = f(b)
        if min(fa, fb) <= 0:
            break
    return (a, fa) if fa < fb else (b, fb)


# -- domains and balls ------------------------------------------------------------

FORWARD, BACKWARD, NEITHER, BOTH = "FORWARD", "BACKWARD", "NEITHER", "BOTH"


def _euclidean_type(space: SpaceDefinition) -> bool:
    return space.kind == "euclidean" or (space.kind in ("cylinder", "torus") and space.cover)


def forward_domain_membership(space: SpaceDefinition, p, q, method: str = "auto") -> str:
    """Which of D_p^+ (FORWARD) and D_p^- (BACKWARD) contain q."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if method == "auto":
        method = "sign" if _euclidean_type(space) else "solver"
    if method == "sign":
        c = float((q - p) @ space.params["W"])
        if not np.any(q - p):
            return BOTH
        return FORWARD if c > 0 else BACKWARD if c < 0 else NEITHER
    fwd = separation(space, p, q).finite
    bwd = separation(space, q, p).finite
    return {(True, True): BOTH, (True, False): FORWARD,
            (False, True): BACKWARD, (False, False): NEITHER}[(fwd, bwd)]


def ball_membership(space: SpaceDefinition, p, r: float, q, direction: str = "forward") -> bool:
    if not r > 0:
        raise ValueError("radius must be positive")
    if direction == "forward":
        res = separation(space, p, q)
    elif direction == "backward":
        res = separation(space, q, p)
    else:
        raise ValueError(f"direction must be forward or backward, got {direction!r}")
    return res.finite and res.value < r


# -- polyline oracle --------------------------------------------------------------------

def default_workers() -> int:
    env = os.environ.get("KROPINA_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _chords(space: SpaceDefinition, A: np.ndarray, B: np.ndarray, s: np.ndarray):
    """Points and velocities of the chords A[k] -> B[k] at parameters s; shape (k, m, D)."""
    if space.kind == "sphere":
        ang = np.asarray(space.h_distance(A, B), dtype=float)
        w = B - np.cos(ang)[:, None] * A
        nw = np.linalg.norm(w, axis=1)
        w = w / np.where(nw > 0, nw, 1.0)[:, None]
        c = np.cos(np.outer(ang, s))[..., None]
        sn = np.sin(np.outer(ang, s))[..., None]
        X = A[:, None] * c + w[:, None] * sn
        Y = ang[:, None, None] * (w[:, None] * c - A[:, None] * sn)
        return X, Y
    d = B - A
    X = A[:, None] + s[None, :, None] * d[:, None]
    return X, np.broadcast_to(d[:, None], X.shape)


class _Polyline:
    """F-lengths of straight (or great-circle) segments by Simpson's rule."""

    def __init__(self, space, nodes: int):
        from .geodesics import _f_many

        self.space = space
        self.f_many = _f_many
        self.s = np.linspace(0.0, 1.0, nodes)
        w = np.ones(nodes)
        w[1:-1:2], w[2:-1:2] = 4, 2
        self.weights = w / (3 * (nodes - 1))

    def segs(self, A, B) -> np.ndarray:
        X, Y = _chords(self.space, np.atleast_2d(A), np.atleast_2d(B), self.s)
        k, m, D = X.shape
        f = self.f_many(self.space, X.reshape(k * m, D), np.ascontiguousarray(Y).reshape(k * m, D))
        f = f.reshape(k, m)
        out = f @ self.weights
        out[~np.all(np.isfinite(f), axis=1)] = math.inf
        return out

    def length(self, verts) -> float:
        return float(np.sum(self.segs(verts[:-1], verts[1:])))


def _move(space, X):
    if space.kind == "sphere":
        return X / np.linalg.norm(X, axis=-1, keepdims=True)
    return X


def _axes(space, X: np.ndarray) -> np.ndarray:
    """Search directions at each vertex, shape (k, r, D)."""
    if space.kind == "sphere":
        eye = np.eye(X.shape[1])
        P = eye[None] - X[:, :, None] * X[:, None, :]
        return P / np.maximum(np.linalg.norm(P, axis=2, keepdims=True), 1e-12)
    return np.broadcast_to(space.frame(X[0]).T, (len(X),) + (space.dim, X.shape[1]))


def _descend(space, poly: _Polyline, verts: np.ndarray, step: float, min_step: float,
             max_sweeps: int = 200) -> tuple:
    """Coordinate descent: each interior vertex tries +-step along each axis.

    Vertices of equal parity share no segment, so each parity class is
    updated in one batch.
    """
    segs = poly.segs(verts[:-1], verts[1:])
    n = len(verts)
    sweeps = 0
    while step > min_step and sweeps < max_sweeps:
        sweeps += 1
        improved = False
        gain = 1e-12 * float(np.sum(segs))
        for parity in (1, 2):
            idx = np.arange(parity, n - 1, 2)
            if idx.size == 0:
                continue
            ax = _axes(space, verts[idx])
            dirs = np.concatenate([ax, -ax], axis=1)
            r = dirs.shape[1]
            cand = _move(space, verts[idx][:, None] + step * dirs).reshape(-1, verts.shape[1])
            left = np.repeat(verts[idx - 1], r, axis=0)
            right = np.repeat(verts[idx + 1], r, axis=0)
            s1 = poly.segs(left, cand).reshape(-1, r)
            s2 = poly.segs(cand, right).reshape(-1, r)
            tot = s1 + s2
            j = np.argmin(tot, axis=1)
            rows = np.arange(len(idx))
            better = tot[rows, j] < segs[idx - 1] + segs[idx] - gain
            if better.any():
                improved = True
                sel = idx[better]
                verts[sel] = cand.reshape(len(idx), r, -1)[rows[better], j[better]]
                segs[sel - 1] = s1[rows[better], j[better]]
                segs[sel] = s2[rows[better], j[better]]
        if not improved:
            step /= 2
    return verts, float(np.sum(segs))


def _drifted_chord(space, p, q, S: float, segments: int) -> np.ndarray:
    """Vertices phi_{kS/N}(c(k/N)) with c the chord from p to phi_{-S}(q)."""
    qm = integrate_flow(space, q, -S)
    ks = np.arange(segments + 1) / segments
    chord = _chords(space, p[None], qm[None], ks)[0][0]
    if space.vectorized and space.flow is not None:
        return np.asarray(space.flow(chord, S * ks), dtype=float)
    return np.array([integrate_flow(space, c, S * k) for c, k in zip(chord, ks)])


def _refine(space, poly, p, q, S, width, segments, rng):
    """Golden-section search on the drift, a random jitter, then vertex descent."""
    f = lambda s: poly.length(_drifted_chord(space, p, q, s, segments))
    g = (math.sqrt(5) - 1) / 2
    lo, hi = S - width, S + width
    a, b = hi - g * (hi - lo), lo + g * (hi - lo)
    fa, fb = f(a), f(b)
    for _ in range(30):
        if fa < fb:
            hi, b, fb = b, a, fa
            a = hi - g * (hi - lo)
            fa = f(a)
        else:
            lo, a, fa = a, b, fb
            b = lo + g * (hi - lo)
            fb = f(b)
    base, S = min((f(S), S), (fa, a), (fb, b))
    if base == math.inf:
        return math.inf
    verts = _drifted_chord(space, p, q, S, segments)
    scale = float(np.linalg.norm(verts[-1] - verts[0])) + 1e-3
    trial = verts.copy()
    for i in range(1, segments):
        trial[i] = _move(space, trial[i] + 0.02 * scale / segments
                         * (space.frame(trial[i]) @ rng.normal(size=space.dim)))
    if poly.length(trial) < math.inf:
        verts = trial
    _, val = _descend(space, poly, verts, 0.05 * scale / segments, 1e-6 * scale)
    return min(val, base)


def polyline_oracle(space: SpaceDefinition, p, q, segments: int = 8, restarts: int = 4,
                    seed: int = 0, workers: int = 1, scan: int = 24,
                    nodes: int = 9) -> float:
    """Brute-force infimum of F-lengths over admissible polylines p -> q.

    Starting polylines follow the chord to phi_{-S}(q) while drifting with the
    flow, for drift amounts S scanned from a random offset. The best starts
    are then refined by coordinate descent over the interior vertices.
    Returns math.inf when no admissible polyline was found. On quotient
    charts the lifts of q near p are tried; when the flow lines are not
    closed the drift range and the lift window double while the best start
    sits at the end of the scan.
    """
    if segments < 2:
        raise ValueError("segments must be at least 2")
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if space.same_point(p, q):
        return 0.0
    poly = _Polyline(space, nodes)
    base = space.wrap_difference(q - p) + p
    grow = not (space.quasi_regular and space.flow_period)
    s_max = 4.0 * (1.0 + float(np.linalg.norm(q - p))) if grow else space.flow_period
    limit = 16 * s_max
    periods = [per for per in space.topology if per is not None] if space.periodic else []
    while True:
        # without closed flow lines a minimizer may wrap several times
        window = 1 + math.ceil(s_max / min(periods)) if grow and periods else 1
        targets = space.lifts(base, window=window)
        rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(restarts)]
        starts = []
        for r, rng in enumerate(rngs):
            grid = np.mod(rng.uniform(0, s_max) + np.linspace(0, s_max, scan, endpoint=False),
                          s_max)
            for t_idx, t in enumerate(targets):
                for S in grid:
                    starts.append((poly.length(_drifted_chord(space, p, t, S, segments)),
                                   r, t_idx, S))
        finite = sorted(s for s in starts if s[0] < math.inf)
        if not grow or 2 * s_max > limit or (finite and finite[0][3] < 0.75 * s_max):
            break
        s_max *= 2
    if not finite:
        return math.inf
    chosen = list(enumerate(finite[:restarts]))

    def run(item):
        idx, (_, _, t_idx, S) = item
        rng = np.random.default_rng([seed, idx])
        return _refine(space, poly, p, targets[t_idx], S, s_max / scan, segments, rng)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vals = list(pool.map(run, chosen))
    else:
        vals = [run(c) for c in chosen]
    return min(vals)


def path_length(space: SpaceDefinition, points: np.ndarray, velocities: np.ndarray,
                params: np.ndarray) -> float:
    """F-length of a sampled curve by the trapezoid rule."""
    nav = space.nav
    f = np.array([F(nav, x, v) for x, v in zip(points, velocities)])
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    return float(trapezoid(f, params))
