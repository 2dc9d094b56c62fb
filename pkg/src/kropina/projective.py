"""Covariant derivatives of beta and the projective-equivalence criterion.

F = alpha^2/beta has the same geodesics as alpha, up to parametrization,
exactly when b_{i;j} = 0. In navigation terms: kappa constant and W parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geodesics import integrate_h_geodesic, kropina_geodesic
from .geometry import (central_jacobian, as_point, christoffel, covariant_derivative)
from .space import SpaceDefinition
from .zermelo import AlphaBetaData, NavigationData, to_alpha_beta

TOL_PROJ = 1e-7


@dataclass(frozen=True)
class BetaDerivativeReport:
    b_cov: np.ndarray    # (m, n, n), b_cov[s, i, j] = b_{i;j}
    r: np.ndarray
    s: np.ndarray
    s_lower: np.ndarray  # (m, n), s_j = b^i s_ij
    max_residual: float


@dataclass(frozen=True)
class NavDerivativeReport:
    R: np.ndarray
    S: np.ndarray
    kappa_grad: np.ndarray
    max_W_residual: float
    max_kappa_grad: float
    identity_residual: float


def _split(B: np.ndarray):
    r = 0.5 * (B + B.T)
    return r, B - r


def beta_derivatives(ab: AlphaBetaData, samples: Sequence) -> BetaDerivativeReport:
    covs, rs, ss, sl = [], [], [], []
    for x in samples:
        x = as_point(x, ab.dim)
        b = ab.b_eval(x)
        gamma = christoffel(ab.a, x)
        B = central_jacobian(ab.b, x) - np.einsum("kij,k->ij", gamma, b)
        r, s = _split(B)
        b_up = np.linalg.solve(ab.a.eval(x), b)
        covs.append(B)
        rs.append(r)
        ss.append(s)
        sl.append(b_up @ s)
    covs = np.array(covs)
    return BetaDerivativeReport(covs, np.array(rs), np.array(ss), np.array(sl),
                                float(np.max(np.abs(covs))) if covs.size else 0.0)


def projective_equivalence_verdict(ab: AlphaBetaData, samples: Sequence) -> tuple:
    rep = beta_derivatives(ab, samples)
    return rep.max_residual <= TOL_PROJ, rep.max_residual


def spray_correction(ab: AlphaBetaData, x, y) -> np.ndarray:
    """Deviation B^i of the Kropina spray from the spray of alpha."""
    x = as_point(x, ab.dim)
    y = as_point(y, ab.dim)
    rep = beta_derivatives(ab, [x])
    r, s = rep.r[0], rep.s[0]
    A = ab.a.eval(x)
    b = ab.b_eval(x)
    b_up = np.linalg.solve(A, b)
    b2 = float(b @ b_up)
    alpha2 = float(y @ A @ y)
    beta = float(b @ y)
    r00 = float(y @ r @ y)
    s0 = float(rep.s_lower[0] @ y)
    s_i0 = np.linalg.solve(A, s @ y)
    common = beta * r00 + alpha2 * s0
    return (-common / (b2 * alpha2) * y - alpha2 / (2 * beta) * s_i0
            + common / (2 * b2 * beta) * b_up)


def navigation_parallel_residual(nav: NavigationData, kappa: Callable,
                                 samples: Sequence) -> NavDerivativeReport:
    """Split W_{i|j} and check it against b_{i;j} of the (a, b) pair for kappa.

    The identities checked are
        r_ij = 2 e^-k (R_ij - 1/2 W^r k_r h_ij)
        s_ij = 2 e^-k (S_ij + (k_i W_j - k_j W_i) / 2)
    with W_i the h-lowered wind.
    """
    ab = to_alpha_beta(nav, kappa)
    beta = beta_derivatives(ab, samples)
    Rs, Ss, ks = [], [], []
    worst_w = worst_id = 0.0
    for idx, x in enumerate(samples):
        x = as_point(x, nav.dim)
        cov = covariant_derivative(nav.h, nav.W, x)
        R, S = _split(cov)
        kg = central_jacobian(lambda z: np.array([kappa(z)]), x)[0]
        h = nav.h.eval(x)
        W = nav.W.eval(x)
        W_low = h @ W
        fac = 2 * math.exp(-kappa(x))
        r_pred = fac * (R - 0.5 * float(W @ kg) * h)
        s_pred = fac * (S + 0.5 * (np.outer(kg, W_low) - np.outer(W_low, kg)))
        worst_id = max(worst_id, float(np.max(np.abs(beta.r[idx] - r_pred))),
                       float(np.max(np.abs(beta.s[idx] - s_pred))))
        worst_w = max(worst_w, float(np.max(np.abs(cov))))
        Rs.append(R)
        Ss.append(S)
        ks.append(kg)
    ks = np.array(ks)
    return NavDerivativeReport(np.array(Rs), np.array(Ss), ks, worst_w,
                               float(np.max(np.abs(ks))) if ks.size else 0.0, worst_id)


def _point_polyline_distance(x: np.ndarray, pts: np.ndarray) -> float:
    a, b = pts[:-1], pts[1:]
    d = b - a
    dd = np.einsum("ij,ij->i", d, d)
    s = np.clip(np.einsum("ij,ij->i", x - a, d) / np.where(dd > 0, dd, 1), 0, 1)
    proj = a + s[:, None] * d
    return float(np.min(np.linalg.norm(x - proj, axis=1)))


def geodesic_corroboration(space: SpaceDefinition, ab: AlphaBetaData, p, y0,
                           t_max: float, steps: int = 1024) -> float:
    """Largest distance from an F-geodesic sample to the a-geodesic with the same start."""
    P = kropina_geodesic(space, p, y0, t_max, steps)
    a_len = 0.0
    for k in range(len(P) - 1):
        x, v = P.points[k], P.velocities[k]
        a_len += math.sqrt(float(v @ ab.a.eval(x) @ v)) * (P.params[k + 1] - P.params[k])
    a_space = SpaceDefinition(name="alpha", dim=ab.dim, metric=ab.a, wind=space.wind)
    y = P.velocities[0]
    y = y / math.sqrt(float(y @ ab.a.eval(P.points[0]) @ y))
    ref = integrate_h_geodesic(a_space, P.points[0], y, 1.05 * a_len + 1e-9, 4 * steps)
    return max(_point_polyline_distance(x, ref.points) for x in P.points)
