"""Chart-level Riemannian primitives.

Points and tangent vectors are plain float arrays. A tangent vector is always
paired with the base point it lives at, passed as a separate argument.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

TOL_SYM = 1e-12


class GeometryError(ValueError):
    """Raised for invalid chart input or a degenerate metric."""


def eps_fd(x: np.ndarray) -> float:
    return 1e-6 * max(1.0, float(np.max(np.abs(x))) if x.size else 1.0)


def as_point(x, dim: Optional[int] = None) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise GeometryError(f"expected a coordinate vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise GeometryError(f"dimension mismatch: expected {dim}, got {arr.shape[0]}")
    if not np.isfinite(arr).all():
        raise GeometryError("non-finite coordinate")
    return arr


def central_jacobian(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
    """Central differences of an array-valued map; derivative index last."""
    h = eps_fd(x)
    cols = []
    for k in range(x.shape[0]):
        e = np.zeros_like(x)
        e[k] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class MetricField:
    """Riemannian metric h_ij(x) on a chart of dimension ``dim``.

    ``partials`` returns d[i, j, k] = dh_ij/dx^k. When absent it is computed
    by central differences. ``prevalidated`` skips the per-call checks for
    fields already checked everywhere (constant metrics).
    """

    dim: int
    func: Callable[[np.ndarray], np.ndarray]
    partials_func: Optional[Callable[[np.ndarray], np.ndarray]] = None
    prevalidated: bool = False

    def eval(self, x) -> np.ndarray:
        x = as_point(x, self.dim)
        h = np.asarray(self.func(x), dtype=float)
        if self.prevalidated:
            return h
        if h.shape != (self.dim, self.dim):
            raise GeometryError(f"metric has shape {h.shape}, expected {(self.dim, self.dim)}")
        if not np.isfinite(h).all():
            raise GeometryError(f"metric not finite at {x.tolist()}")
        if abs(h - h.T).max() > TOL_SYM * max(1.0, float(abs(h).max())):
            raise GeometryError(f"metric not symmetric at {x.tolist()}")
        try:
            np.linalg.cholesky(h)
        except np.linalg.LinAlgError:
            raise GeometryError(f"metric not positive-definite at {x.tolist()}") from None
        return h

    def partials(self, x) -> np.ndarray:
        x = as_point(x, self.dim)
        if self.partials_func is not None:
            return np.asarray(self.partials_func(x), dtype=float)
        return central_jacobian(self.func, x)


@dataclass(frozen=True)
class VectorField:
    """Vector field W^i(x); ``jacobian`` returns J[i, k] = dW^i/dx^k."""

    dim: int
    func: Callable[[np.ndarray], np.ndarray]
    jacobian_func: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def eval(self, x) -> np.ndarray:
        x = as_point(x, self.dim)
        w = np.asarray(self.func(x), dtype=float)
        if w.shape != (self.dim,):
            raise GeometryError(f"field has shape {w.shape}, expected {(self.dim,)}")
        if not np.isfinite(w).all():
            raise GeometryError(f"field not finite at {x.tolist()}")
        return w

    def jacobian(self, x) -> np.ndarray:
        x = as_point(x, self.dim)
        if self.jacobian_func is not None:
            return np.asarray(self.jacobian_func(x), dtype=float)
        return central_jacobian(self.func, x)


@dataclass(frozen=True)
class FieldDiagnostics:
    killing_residual: float
    parallel_residual: float
    closedness_residual: float
    unit_deviation: float
    samples: int = 0
    worst_point: Optional[tuple] = None


def constant_metric(matrix) -> MetricField:
    m = np.array(matrix, dtype=float)
    n = m.shape[0]
    zeros = np.zeros((n, n, n))
    MetricField(n, lambda x: m).eval(np.zeros(n))  # validate once
    m.flags.writeable = False
    return MetricField(n, lambda x: m, lambda x: zeros, prevalidated=True)


def constant_field(vector) -> VectorField:
    w = np.array(vector, dtype=float)
    n = w.shape[0]
    zeros = np.zeros((n, n))
    return VectorField(n, lambda x: w, lambda x: zeros)


def inner(metric: MetricField, x, u, v) -> float:
    x = as_point(x, metric.dim)
    u = as_point(u, metric.dim)
    v = as_point(v, metric.dim)
    return float(u @ metric.eval(x) @ v)


def norm(metric: MetricField, x, u) -> float:
    return float(np.sqrt(inner(metric, x, u, u)))


def christoffel(metric: MetricField, x) -> np.ndarray:
    """Gamma[i, j, k] = 1/2 h^{il} (d_j h_lk + d_k h_lj - d_l h_jk)."""
    h = metric.eval(x)
    d = metric.partials(x)
    # d[l, k, j] = d_j h_lk
    lower = 0.5 * (np.transpose(d, (0, 2, 1)) + d - np.transpose(d, (2, 0, 1)))
    # lower[l, j, k] = d_j h_lk + d_k h_lj - d_l h_jk, halved
    gamma = np.einsum("il,ljk->ijk", np.linalg.inv(h), lower)
    return 0.5 * (gamma + np.transpose(gamma, (0, 2, 1)))


def lowered_field_derivative(metric: MetricField, field: VectorField, x) -> np.ndarray:
    """D[i, j] = d_j W_i for the lowered field W_i = h_ik W^k."""
    h = metric.eval(x)
    d = metric.partials(x)
    w = field.eval(x)
    return np.einsum("ikj,k->ij", d, w) + h @ field.jacobian(x)


def covariant_derivative(metric: MetricField, field: VectorField, x) -> np.ndarray:
    """W_{i|j} = d_j W_i - Gamma^k_ij W_k."""
    h = metric.eval(x)
    w_low = h @ field.eval(x)
    gamma = christoffel(metric, x)
    return lowered_field_derivative(metric, field, x) - np.einsum("kij,k->ij", gamma, w_low)


def field_diagnostics(metric: MetricField, field: VectorField,
                      samples: Sequence) -> FieldDiagnostics:
    killing = parallel = closed = unit = 0.0
    worst = None
    worst_val = -1.0
    for s in samples:
        x = as_point(s, metric.dim)
        cov = covariant_derivative(metric, field, x)
        dlow = lowered_field_derivative(metric, field, x)
        k = float(np.max(np.abs(cov + cov.T)))
        p = float(np.max(np.abs(cov)))
        c = float(np.max(np.abs(dlow - dlow.T)))
        u = abs(norm(metric, x, field.eval(x)) - 1.0)
        killing, parallel = max(killing, k), max(parallel, p)
        closed, unit = max(closed, c), max(unit, u)
        if max(k, u) > worst_val:
            worst_val, worst = max(k, u), tuple(x.tolist())
    return FieldDiagnostics(killing, parallel, closed, unit, len(samples), worst)


def halton_samples(count: int, low, high) -> np.ndarray:
    """Deterministic low-discrepancy points in the box [low, high]."""
    from scipy.stats import qmc

    low = np.asarray(low, dtype=float)
    high = np.asarray(high, dtype=float)
    sampler = qmc.Halton(d=low.shape[0], scramble=False)
    sampler.fast_forward(1)  # skip the corner point at the origin of the box
    return qmc.scale(sampler.random(count), low, high)


def orthonormal_frame(metric: MetricField, x) -> np.ndarray:
    """Columns form an h-orthonormal basis of the tangent space at x."""
    h = metric.eval(x)
    L = np.linalg.cholesky(h)
    return np.linalg.inv(L).T
