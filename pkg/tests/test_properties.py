import math

import numpy as np
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from kropina.dsl import (Binary, DomainError, Literal, Unary, Variable, evaluate,
                         parse_expression, to_text)
from kropina.geodesics import integrate_flow, kropina_geodesic
from kropina.geometry import (MetricField, VectorField, christoffel, constant_metric,
                              field_diagnostics)
from kropina.models import cylinder_space, sphere_space, torus_space
from kropina.separation import delta, h_distance, separation
from kropina.zermelo import (AlphaBetaData, NavigationData, F, indicatrix_residual,
                             to_alpha_beta, to_navigation)
from kropina.geometry import constant_field

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
vec2 = st.tuples(finite, finite).map(np.array)
angle = st.floats(0, 2 * math.pi, allow_nan=False)
fast = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


def plane(theta):
    return NavigationData(constant_metric(np.eye(2)),
                          constant_field([math.cos(theta), math.sin(theta)]))


def skewed_nav():
    """Non-flat metric with an h-unit (not Killing) wind; F does not care."""
    def h(x):
        return np.array([[2 + math.sin(x[0]), 0.3], [0.3, 1 + x[1] ** 2]])

    def w(x):
        H = h(x)
        u = np.array([1.0, 0.5 * math.cos(x[1])])
        return u / math.sqrt(u @ H @ u)

    return NavigationData(MetricField(2, h), VectorField(2, w))


SKEWED = skewed_nav()


@fast
@given(x=vec2, y=vec2, lam=st.floats(0.01, 100))
def test_homogeneity(x, y, lam):
    f = F(SKEWED, x, y)
    g = F(SKEWED, x, lam * y)
    # the absolute floor of the admissibility test is not scale invariant
    assume(math.isfinite(f) and math.isfinite(g) and f > 0)
    assert abs(g - lam * f) <= 1e-12 * lam * f


@fast
@given(x=vec2, y=vec2)
def test_riemannian_lower_bound(x, y):
    f = F(SKEWED, x, y)
    assume(math.isfinite(f))
    n = math.sqrt(y @ SKEWED.h.eval(x) @ y)
    assert f >= 0.5 * n * (1 - 1e-12)


@fast
@given(x=vec2, lam=st.floats(0.01, 100))
def test_lower_bound_equality_along_wind(x, lam):
    W = SKEWED.W.eval(x)
    assert abs(F(SKEWED, x, lam * W) - lam / 2) <= 1e-12 * lam


@fast
@given(x=vec2, phi=angle, scale=st.floats(0.1, 10))
def test_indicatrix_correspondence(x, phi, scale):
    # u on the h-unit circle, y = u + W has F = 1; scaling moves it off
    H = SKEWED.h.eval(x)
    L = np.linalg.cholesky(H)
    u = np.linalg.solve(L.T, [math.cos(phi), math.sin(phi)])
    y = u + SKEWED.W.eval(x)
    assume(math.sqrt(y @ H @ y) > 1e-3)
    assert abs(F(SKEWED, x, y) - 1) <= 1e-10
    assert indicatrix_residual(SKEWED, x, y) <= 1e-10
    W = SKEWED.W.eval(x)
    for eps in (1e-9, -1e-9):
        # off the h-unit circle by eps: F moves off 1 by about the same amount
        v = u * (1 + eps)
        assert abs(F(SKEWED, x, v + W) - 1) > 1e-11
        # off F = 1 by eps: |y - W|_h moves off 1 by about eps |y|_h^2 / 2
        z = y * (1 + eps)
        assert abs(F(SKEWED, x, z) - 1) > 5e-10
        yy = y @ H @ y
        if yy > 1e-2:
            assert abs(math.sqrt((z - W) @ H @ (z - W)) - 1) > 0.4 * 1e-9 * yy


names = st.sampled_from(["x1", "x2", "A"])
leaves = st.one_of(st.floats(0, 1e6, allow_nan=False).map(Literal), names.map(Variable))
exprs = st.recursive(
    leaves,
    lambda kids: st.one_of(
        st.tuples(st.sampled_from(["neg", "sin", "cos", "exp", "log", "sqrt"]), kids)
        .map(lambda t: Unary(*t)),
        st.tuples(st.sampled_from(["+", "-", "*", "/", "^"]), kids, kids)
        .map(lambda t: Binary(*t))),
    max_leaves=12)


@settings(max_examples=200, deadline=None)
@given(e=exprs)
def test_print_parse_idempotent(e):
    assert parse_expression(to_text(e), constants=("A",)) == e


@settings(max_examples=100, deadline=None)
@given(e=exprs, x1=finite, x2=finite)
def test_evaluation_pure(e, x1, x2):
    b = {"x1": x1, "x2": x2, "A": 0.5}
    try:
        first = evaluate(e, b)
    except (DomainError, OverflowError):
        return
    second = evaluate(e, b)
    assert first == second or (math.isnan(first) and math.isnan(second))


@fast
@given(x=vec2)
def test_christoffel_symmetric(x):
    G = christoffel(SKEWED.h, x)
    assert np.array_equal(G, np.transpose(G, (0, 2, 1)))


@fast
@given(x=st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).map(np.array),
       u=st.tuples(finite, finite, finite).map(np.array),
       v=st.tuples(finite, finite, finite).map(np.array), k=st.integers(0, 2))
def test_metric_compatibility(x, u, v, k):
    def hfun(z):
        return np.array([[1 + z[0] ** 2, 0.2 * z[1], 0.0],
                         [0.2 * z[1], 2.0, 0.1 * z[2]],
                         [0.0, 0.1 * z[2], 1.5 + math.cos(z[0])]])

    h = MetricField(3, hfun)
    eps = 1e-5
    e = np.zeros(3)
    e[k] = eps
    lhs = (u @ hfun(x + e) @ v - u @ hfun(x - e) @ v) / (2 * eps)
    G = christoffel(h, x)
    Du, Dv = G[:, k, :] @ u, G[:, k, :] @ v
    H = hfun(x)
    rhs = Du @ H @ v + u @ H @ Dv
    assert abs(lhs - rhs) <= 1e-5 * max(1.0, np.abs(u).max() * np.abs(v).max())


@fast
@given(c=st.tuples(finite, finite).map(np.array), m=st.tuples(finite, finite, finite, finite),
       small=st.floats(0, 1e-3))
def test_diagnostics_chain(c, m, small):
    M = small * np.array(m).reshape(2, 2)
    W = VectorField(2, lambda x: c + M @ x, lambda x: M)
    d = field_diagnostics(constant_metric(np.eye(2)), W, [np.array([0.1, 0.2]), np.zeros(2)])
    eps = d.parallel_residual
    assert d.killing_residual <= 2 * eps + 1e-15
    assert d.closedness_residual <= 2 * eps + 1e-15


@fast
@given(theta=angle, k0=finite, k1=st.floats(-0.5, 0.5), x=vec2)
def test_conversion_round_trips(theta, k0, k1, x):
    nav = plane(theta)

    def kappa(z):
        return k0 + k1 * z[0]

    back = to_navigation(to_alpha_beta(nav, kappa), [x])
    assert np.max(np.abs(back.h.eval(x) - nav.h.eval(x))) <= 1e-10 * math.exp(abs(k0) + 3)
    assert np.max(np.abs(back.W.eval(x) - nav.W.eval(x))) <= 1e-10
    ab = AlphaBetaData.from_ab(MetricField(2, lambda z: (2 + math.sin(z[0])) * np.eye(2)),
                               lambda z: np.array([1.0 + 0.1 * z[1], 0.4]))
    nav2 = to_navigation(ab, [x])
    ab2 = to_alpha_beta(nav2, ab.kappa)
    assert np.max(np.abs(ab2.a.eval(x) - ab.a.eval(x))) <= 1e-10
    assert np.max(np.abs(ab2.b_eval(x) - ab.b_eval(x))) <= 1e-10


def _sphere_point(seed):
    z = np.random.default_rng(seed).normal(size=4)
    return z / np.linalg.norm(z)


quasi = st.sampled_from(["sphere", "torus", "cylinder"])
SPACES = {"sphere": sphere_space(3), "torus": torus_space(), "cylinder": cylinder_space(1.0, 0.0)}


def _point(kind, draw_seed):
    if kind == "sphere":
        return _sphere_point(draw_seed)
    rng = np.random.default_rng(draw_seed)
    return rng.uniform(0, 2 * math.pi, 2) if kind == "torus" else rng.uniform(-3, 3, 2)


@settings(max_examples=30, deadline=None)
@given(kind=quasi, seeds=st.tuples(st.integers(0, 10**6), st.integers(0, 10**6),
                                   st.integers(0, 10**6)))
def test_triangle_inequality(kind, seeds):
    S = SPACES[kind]
    p, q, r = (_point(kind, s) for s in seeds)
    pq, qr, pr = separation(S, p, q), separation(S, q, r), separation(S, p, r)
    assert pq.finite and qr.finite and pr.finite
    assert pr.value <= pq.value + qr.value + 1e-6


@settings(max_examples=30, deadline=None)
@given(kind=quasi, seeds=st.tuples(st.integers(0, 10**6), st.integers(0, 10**6)))
def test_separation_lower_bound(kind, seeds):
    S = SPACES[kind]
    p, q = (_point(kind, s) for s in seeds)
    r = separation(S, p, q)
    assert r.value >= 0.5 * h_distance(S, p, q) - 1e-12


@settings(max_examples=20, deadline=None)
@given(kind=quasi, seeds=st.tuples(st.integers(0, 10**6), st.integers(0, 10**6)))
def test_delta_is_one_lipschitz(kind, seeds):
    S = SPACES[kind]
    p, q = (_point(kind, s) for s in seeds)
    taus = np.linspace(0, 7, 50)
    d = np.array([delta(S, p, q, t) for t in taus])
    assert np.all(np.abs(np.diff(d)) <= np.diff(taus) + 1e-9)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6), phi=angle)
def test_admissibility_along_sphere_geodesic(seed, phi):
    S = sphere_space(3)
    z = _sphere_point(seed)
    E = S.frame(z)
    v = E @ np.array([math.cos(phi), math.sin(phi), 0.3])
    v /= np.linalg.norm(v)
    W = S.wind.eval(z)
    assume(np.linalg.norm(v + W) > 1e-3)
    P = kropina_geodesic(S, z, v + W, 6.0, 256)
    rho = np.array([integrate_flow(S, x, -t) for x, t in zip(P.points, P.params)])
    rho_dot = np.gradient(rho, P.params, axis=0)
    Wp = S.params["wind_batch"](P.points)
    Wr = S.params["wind_batch"](rho)
    cos_angle = np.einsum("ij,ij->i", rho_dot, Wr) / np.linalg.norm(rho_dot, axis=1)
    lhs = np.einsum("ij,ij->i", P.velocities, Wp)
    assert np.all(lhs >= 1 + cos_angle - 1e-3)
    assert np.all(lhs > 0)
    assert np.max(np.abs(np.linalg.norm(rho_dot[1:-1], axis=1) - 1)) <= 1e-3
