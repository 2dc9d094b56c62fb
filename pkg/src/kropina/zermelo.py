"""Kropina metrics and the navigation correspondence.

F(x, y) = |y|_h^2 / (2 h(y, W)) = alpha^2 / beta, defined on the open
half-space h(y, W) > 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import (GeometryError, MetricField, VectorField, as_point,
                       field_diagnostics)

TOL_UNIT = 1e-8


class ConicDomainError(ValueError):
    """A tangent vector outside (or too close to the edge of) the conic domain."""


@dataclass(frozen=True)
class NavigationData:
    h: MetricField
    W: VectorField

    @property
    def dim(self) -> int:
        return self.h.dim

    def validate(self, samples: Sequence) -> float:
        """Check |W|_h = 1 on samples; returns the worst deviation."""
        dev = field_diagnostics(self.h, self.W, samples).unit_deviation
        if dev > TOL_UNIT:
            raise GeometryError(f"wind is not h-unit: deviation {dev:.3e}")
        return dev


@dataclass(frozen=True)
class AlphaBetaData:
    a: MetricField
    b: Callable[[np.ndarray], np.ndarray]
    kappa: Callable[[np.ndarray], float]

    @property
    def dim(self) -> int:
        return self.a.dim

    @classmethod
    def from_ab(cls, a: MetricField, b: Callable) -> "AlphaBetaData":
        """Pair (a, b) with the conformal factor forced by b^2 = 4 exp(-kappa)."""

        def kappa(x):
            return math.log(4.0 / b_squared(a, b, x))

        return cls(a, b, kappa)

    def b_eval(self, x) -> np.ndarray:
        x = as_point(x, self.dim)
        return np.asarray(self.b(x), dtype=float)


@dataclass(frozen=True)
class KropinaValue:
    value: float  # math.inf when inadmissible
    beta_value: float

    @property
    def admissible(self) -> bool:
        return math.isfinite(self.value)


INADMISSIBLE = math.inf


def b_squared(a: MetricField, b: Callable, x) -> float:
    x = np.asarray(x, dtype=float)
    bx = np.asarray(b(x), dtype=float)
    return float(bx @ np.linalg.solve(a.eval(x), bx))


def kropina_value(nav: NavigationData, x, y) -> KropinaValue:
    x = as_point(x, nav.dim)
    y = as_point(y, nav.dim)
    h = nav.h.eval(x)
    hy = h @ y
    yy = float(y @ hy)
    W = nav.W.eval(x)
    beta = float(hy @ W)
    if not beta > 1e-12 * yy + 1e-300:
        return KropinaValue(INADMISSIBLE, beta)
    # rescale so tiny or huge y do not under/overflow in |y|^2
    scale = float(np.max(np.abs(y)))
    u = y / scale
    hu = h @ u
    return KropinaValue(scale * float(u @ hu) / (2.0 * float(hu @ W)), beta)


def F(nav: NavigationData, x, y) -> float:
    """Kropina norm; math.inf outside the conic domain."""
    return kropina_value(nav, x, y).value


def kropina_gradient(nav: NavigationData, x, y) -> np.ndarray:
    """dF/dy at an admissible y (analytic)."""
    h = nav.h.eval(x)
    hy = h @ y
    hw = h @ nav.W.eval(x)
    beta = float(y @ hw)
    if beta <= 0:
        raise ConicDomainError("gradient requested outside the conic domain")
    return hy / beta - float(y @ hy) * hw / (2.0 * beta * beta)


def alpha_beta_value(ab: AlphaBetaData, x, y) -> float:
    x = as_point(x, ab.dim)
    y = as_point(y, ab.dim)
    alpha2 = float(y @ ab.a.eval(x) @ y)
    beta = float(ab.b_eval(x) @ y)
    if beta > 1e-12 * alpha2 + 1e-300:
        return alpha2 / beta
    return INADMISSIBLE


def indicatrix_residual(nav: NavigationData, x, y) -> float:
    kv = kropina_value(nav, x, y)
    if not kv.admissible:
        raise ConicDomainError(f"inadmissible tangent (h(y,W)={kv.beta_value:.3e})")
    x = as_point(x, nav.dim)
    u = np.asarray(y, dtype=float) / kv.value - nav.W.eval(x)
    return abs(math.sqrt(float(u @ nav.h.eval(x) @ u)) - 1.0)


def to_navigation(ab: AlphaBetaData, samples: Optional[Sequence] = None) -> NavigationData:
    """h = e^kappa a with kappa = log(4/b^2); W^i = 1/2 a^ij b_j.

    ``samples`` are points where b^2 > 0 is checked up front (default: the
    chart origin). Later evaluations at points where b vanishes raise.
    """
    n = ab.dim
    a, b = ab.a, ab.b
    check = [np.zeros(n)] if samples is None else samples
    for s in check:
        if not b_squared(a, b, s) > 0:
            raise ConicDomainError(f"b vanishes at {np.asarray(s).tolist()}")

    def kappa(x):
        b2 = b_squared(a, b, x)
        if not b2 > 0:
            raise ConicDomainError(f"b vanishes at {np.asarray(x).tolist()}")
        return math.log(4.0 / b2)

    def h(x):
        return math.exp(kappa(x)) * a.eval(x)

    def w(x):
        return 0.5 * np.linalg.solve(a.eval(x), np.asarray(b(x), dtype=float))

    return NavigationData(MetricField(n, h), VectorField(n, w))


def to_alpha_beta(nav: NavigationData, kappa: Callable[[np.ndarray], float]) -> AlphaBetaData:
    """a = e^-kappa h, b_i = 2 e^-kappa h_ij W^j."""
    n = nav.dim
    h, W = nav.h, nav.W

    def a(x):
        return math.exp(-kappa(x)) * h.eval(x)

    def b(x):
        return 2.0 * math.exp(-kappa(x)) * (h.eval(x) @ W.eval(x))

    return AlphaBetaData(MetricField(n, a), b, kappa)


def fundamental_tensor(nav: NavigationData, x, y) -> np.ndarray:
    """g_y = 1/2 Hessian of F^2 in y, by central differences."""
    x = as_point(x, nav.dim)
    y = as_point(y, nav.dim)
    h = nav.h.eval(x)
    yy = float(y @ h @ y)
    beta = float(y @ h @ nav.W.eval(x))
    if beta < 1e-6 * yy:
        raise ConicDomainError("tangent too close to the conic boundary")
    step = 1e-4 * math.sqrt(yy)  # ~eps^(1/4) balances truncation and roundoff
    n = nav.dim

    def f2(v):
        return F(nav, x, v) ** 2

    g = np.empty((n, n))
    f0 = f2(y)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = step
        g[i, i] = (f2(y + ei) - 2 * f0 + f2(y - ei)) / step**2
        for j in range(i):
            ej = np.zeros(n)
            ej[j] = step
            g[i, j] = g[j, i] = (f2(y + ei + ej) - f2(y + ei - ej)
                                 - f2(y - ei + ej) + f2(y - ei - ej)) / (4 * step**2)
    return 0.5 * g
