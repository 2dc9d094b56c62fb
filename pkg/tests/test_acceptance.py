"""End-to-end acceptance checks, one test per numbered criterion.

Each test asserts its own time budget as well; the conftest hook prints a
PASS/FAIL line per criterion in the terminal summary.
"""

import io
import math
import time
from functools import lru_cache

import numpy as np
import pytest
from scipy.linalg import expm

from kropina.cli import run
from kropina.geodesics import (gauss_orthogonality, jacobi_conjugate_search, kropina_exponential,
                               kropina_geodesic)
from kropina.geometry import MetricField, constant_field, constant_metric
from kropina.models import (cut_locus, cylinder_space, euclidean_space, h_cut_locus,
                            sphere_space, torus_space, twist_h_cut_locus)
from kropina.projective import (geodesic_corroboration, navigation_parallel_residual,
                                projective_equivalence_verdict)
from kropina.separation import (FINITE, UNREACHABLE, ball_membership, default_workers,
                                h_distance, path_length, polyline_oracle, separation)
from kropina.space import unit_admissible
from kropina.zermelo import (AlphaBetaData, F, NavigationData, indicatrix_residual, to_alpha_beta,
                             to_navigation)

TWO_PI = 2 * math.pi
S2 = 1 / math.sqrt(2)


def spaces():
    return {
        "euclidean": euclidean_space(2, [1.0, 0.0]),
        "sphere": sphere_space(3),
        "cylinder": cylinder_space(0.6, 0.8),
        "torus": torus_space(),
    }


def random_point(space, rng):
    if space.kind == "sphere":
        z = rng.normal(size=space.coord_dim)
        return z / np.linalg.norm(z)
    if space.periodic:
        return rng.uniform(0, TWO_PI, space.coord_dim)
    return rng.uniform(-3, 3, space.coord_dim)


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.2f} s"


def random_spd(rng, n):
    M = rng.normal(size=(n, n))
    return M @ M.T + 0.5 * np.eye(n)


@pytest.mark.criterion(1)
def test_conversion_round_trips():
    rng = np.random.default_rng(101)
    kappas = (lambda x: 0.0, lambda x: 1.7, lambda x: 0.3 * x[0] - 0.2 * x[1])
    worst = unit = 0.0
    with Budget(1.0):
        for _ in range(200):
            A = random_spd(rng, 2)
            bvec = rng.normal(size=2)
            ab = AlphaBetaData.from_ab(constant_metric(A), lambda x, b=bvec: b)
            x = rng.uniform(-2, 2, 2)
            nav = to_navigation(ab, [x])
            W = nav.W.eval(x)
            unit = max(unit, abs(math.sqrt(W @ nav.h.eval(x) @ W) - 1))
            ab2 = to_alpha_beta(nav, ab.kappa)
            worst = max(worst, np.max(np.abs(ab2.a.eval(x) - A)),
                        np.max(np.abs(ab2.b_eval(x) - bvec)))
            for kappa in kappas:
                back = to_navigation(to_alpha_beta(nav, kappa), [x])
                worst = max(worst, np.max(np.abs(back.h.eval(x) - nav.h.eval(x))),
                            np.max(np.abs(back.W.eval(x) - W)))
    assert worst <= 1e-10
    assert unit <= 1e-8


@pytest.mark.criterion(2)
def test_indicatrix_identity():
    rng = np.random.default_rng(202)
    worst = 0.0
    with Budget(1.0):
        for space in spaces().values():
            nav = space.nav
            for k in range(1000):
                x = random_point(space, rng)
                W = space.wind.eval(x)
                y = space.random_tangent(x, rng)
                if y @ space.metric.eval(x) @ W <= 0:
                    y = -y
                if not math.isfinite(F(nav, x, y)):
                    continue
                worst = max(worst, indicatrix_residual(nav, x, y))
                if k % 5 == 0:
                    # the other direction: h-unit u gives F(u + W) = 1
                    worst = max(worst, abs(F(nav, x, unit_admissible(space, x, rng)) - 1))
    assert worst <= 1e-10


@pytest.mark.criterion(3)
def test_unit_speed_geodesics():
    rng = np.random.default_rng(303)
    worst = 0.0
    with Budget(10.0):
        for space in spaces().values():
            for _ in range(50):
                p = random_point(space, rng)
                y = rng.uniform(0.2, 5) * unit_admissible(space, p, rng)
                P = kropina_geodesic(space, p, y, 10.0, 1024)
                assert P.params[-1] == 10.0 and np.all(P.admissible)
                worst = max(worst, float(np.max(np.abs(P.f_values - 1))))
    assert worst <= 1e-6


@pytest.mark.criterion(4)
def test_sphere_closed_geodesics():
    rng = np.random.default_rng(404)
    S = sphere_space(3)
    worst = length_err = 0.0
    with Budget(5.0):
        for _ in range(50):
            z = random_point(S, rng)
            y = unit_admissible(S, z, rng)
            P = kropina_geodesic(S, z, y, TWO_PI, 1024)
            assert P.params[512] == pytest.approx(math.pi, abs=1e-15)
            worst = max(worst, np.linalg.norm(P.points[512] - z), np.linalg.norm(P.end - z))
            L = path_length(S, P.points[:513], P.velocities[:513], P.params[:513])
            length_err = max(length_err, abs(L - math.pi))
    assert worst <= 1e-6
    assert length_err <= 1e-6


def _reference_exp(space, p, y, t):
    """phi_t(e_p(t(y - W))) from matrix exponentials and straight/great-circle lines."""
    nav = space.nav
    r = F(nav, p, y)
    s = t * r
    v = y / r - space.wind.eval(p)
    if space.kind == "sphere":
        n = np.linalg.norm(v)
        e = p * math.cos(s * n) + v / n * math.sin(s * n)
        K = space.wind.jacobian(p)  # W(z) = K z
        return expm(s * K) @ e
    return p + s * v + s * space.wind.eval(p)


@pytest.mark.criterion(5)
def test_exponential_commutation():
    rng = np.random.default_rng(505)
    worst = 0.0
    with Budget(5.0):
        for space in spaces().values():
            for _ in range(100):
                p = random_point(space, rng)
                y = rng.uniform(0.2, 3) * unit_admissible(space, p, rng)
                t = rng.uniform(0, 4)
                got = kropina_exponential(space, p, y, t)
                ref = _reference_exp(space, p, y, t)
                geo = kropina_geodesic(space, p, y, t * F(space.nav, p, y), 256).end
                worst = max(worst, np.max(np.abs(space.wrap_difference(got - ref))),
                            np.max(np.abs(space.wrap_difference(geo - ref))))
    assert worst <= 1e-6


@lru_cache(maxsize=None)
def trichotomy_cases():
    rng = np.random.default_rng(606)
    out = []
    for space in (euclidean_space(2, [1.0, 0.0]), euclidean_space(3, [0.0, 0.0, 1.0]),
                  euclidean_space(2, [0.6, 0.8])):
        W = space.params["W"]
        axis = int(np.argmax(W))
        for k in range(100):
            if k % 5 == 0 and W[axis] == 1.0:
                # dyadic points keep <q - p, W> exactly zero
                p = rng.integers(-16, 16, space.dim) / 8
                step = rng.integers(1, 16, space.dim) / 8 * rng.choice([-1, 1], space.dim)
                step[axis] = 0.0
                q = p + step
            else:
                p = rng.uniform(-2, 2, space.dim)
                q = p + rng.normal(size=space.dim) * 2
            c = float((q - p) @ W)
            out.append((space, p, q, c, separation(space, p, q), separation(space, q, p)))
    return out


@pytest.mark.criterion(6)
def test_euclidean_trichotomy():
    with Budget(5.0):
        cases = trichotomy_cases()
    assert len(cases) == 300
    assert sum(c == 0 for *_, c, _, _ in cases) >= 30
    for space, p, q, c, fwd, bwd in cases:
        if c > 0:
            assert (fwd.status, bwd.status) == (FINITE, UNREACHABLE)
        elif c < 0:
            assert (fwd.status, bwd.status) == (UNREACHABLE, FINITE)  # backward only
        else:
            assert (fwd.status, bwd.status) == (UNREACHABLE, UNREACHABLE)


@lru_cache(maxsize=None)
def closed_form_cases():
    rng = np.random.default_rng(707)
    out = []
    for space in (euclidean_space(2, [1.0, 0.0]), cylinder_space(0.6, 0.8, cover=True)):
        W = space.wind.eval(np.zeros(2))
        while sum(o[0] is space for o in out) < 100:
            p, q = rng.uniform(-4, 4, 2), rng.uniform(-4, 4, 2)
            c = float((q - p) @ W)
            if c > 1e-3:
                out.append((space, p, q, float((q - p) @ (q - p)) / (2 * c),
                            separation(space, p, q)))
    T = torus_space(cover=True)
    while sum(o[0] is T for o in out) < 100:
        u, v = rng.uniform(-3, 8, 2)
        if u + v > 1e-3:
            q = np.array([u, v])
            out.append((T, np.zeros(2), q, (u * u + v * v) / (math.sqrt(2) * (u + v)),
                        separation(T, np.zeros(2), q)))
    return out


@pytest.mark.criterion(7)
def test_fixed_point_vs_closed_forms():
    with Budget(10.0):
        cases = closed_form_cases()
        example = separation(torus_space(cover=True), [0, 0], [math.pi, math.pi])
    assert len(cases) == 300
    for _, _, _, ref, res in cases:
        assert res.status == FINITE and abs(res.value - ref) <= 1e-6
    assert abs(example.value - math.pi / math.sqrt(2)) <= 1e-6
    assert abs(example.value - 2.221441) <= 1e-6


@lru_cache(maxsize=None)
def oracle_cases():
    rng = np.random.default_rng(808)
    workers = default_workers()
    out = []
    for name, space in spaces().items():
        count = 0
        while count < 50:
            p, q = random_point(space, rng), random_point(space, rng)
            res = separation(space, p, q)
            if res.status != FINITE or res.value < 1e-3:
                continue
            segs = 16 if name == "sphere" else 8
            orc = polyline_oracle(space, p, q, segments=segs, restarts=2, seed=count,
                                  workers=workers)
            out.append((name, space, p, q, res, orc))
            count += 1
    return out


@pytest.mark.criterion(8)
def test_oracle_equivalence():
    with Budget(60.0):
        cases = oracle_cases()
    assert len(cases) == 200
    worst = max(abs(orc - res.value) / res.value for *_, res, orc in cases)
    assert worst <= 0.02, worst


@pytest.mark.criterion(9)
def test_lower_bound_and_ball_inclusion():
    finite = [(s, p, q, fwd) for s, p, q, _, fwd, _ in trichotomy_cases() if fwd.finite]
    finite += [(s, q, p, bwd) for s, p, q, _, _, bwd in trichotomy_cases() if bwd.finite]
    finite += [(s, p, q, res) for s, p, q, _, res in closed_form_cases()]
    finite += [(s, p, q, res) for _, s, p, q, res, _ in oracle_cases()]
    assert len(finite) >= 500
    with Budget(5.0):
        for space, p, q, res in finite:
            assert res.value >= 0.5 * h_distance(space, p, q) - 1e-12
        rng = np.random.default_rng(909)
        hits = 0
        attempts = 0
        while hits < 100:
            attempts += 1
            space = list(spaces().values())[attempts % 4]
            p = random_point(space, rng)
            eps = rng.uniform(0.1, 1.5)
            if space.kind == "sphere":
                q = p + 0.8 * space.random_tangent(p, rng)
                q /= np.linalg.norm(q)
            else:
                q = p + rng.normal(size=space.coord_dim) * eps
            if ball_membership(space, p, eps, q):
                hits += 1
                assert h_distance(space, p, q) < 2 * eps
    assert attempts < 1000


@pytest.mark.criterion(10)
def test_conjugate_points():
    rng = np.random.default_rng(1010)
    with Budget(30.0):
        for name, space in spaces().items():
            p = random_point(space, rng)
            y = unit_admissible(space, p, rng)
            if name == "sphere":
                rep = jacobi_conjugate_search(space, p, y, 4.0)
                assert abs(rep.parameters[0] - math.pi) <= 1e-4
                assert np.linalg.norm(rep.points[0] - p) <= 1e-4
            else:
                assert jacobi_conjugate_search(space, p, y, 50.0).parameters == []


@pytest.mark.criterion(11)
def test_cut_loci():
    with Budget(30.0):
        p = np.zeros(2)
        # cylinder (1, 0): hyperbola x = pi + sqrt(pi^2 + v^2)
        c = cut_locus(cylinder_space(1.0, 0.0, cover=True), p, 65)
        v = c.samples[:, 1]
        np.testing.assert_allclose(c.parameter, v, atol=0)
        assert np.max(np.abs(c.samples[:, 0] - (math.pi + np.sqrt(math.pi**2 + v**2)))) <= 1e-8
        C = cylinder_space(1.0, 0.0)
        checked = 0
        for q in c.samples[::4]:
            if abs(q[1]) < 1e-9:
                continue  # (2 pi, 0) is p itself on the quotient
            res = separation(C, p, q)
            assert res.status == FINITE and len(res.directions) >= 2
            assert np.linalg.norm(res.directions[0] - res.directions[1]) > 1e-3
            for d in res.directions[:2]:
                end = kropina_geodesic(C, p, d, res.value, 256).end
                assert np.max(np.abs(C.wrap_difference(end - q))) <= 1e-5
            assert abs(res.value - math.hypot(math.pi, q[1])) <= 1e-5
            checked += 1
        assert checked >= 10
        # cylinder (0, 1): the half-meridian x = pi, y > 0
        c = cut_locus(cylinder_space(0.0, 1.0, cover=True), p, 65)
        assert np.all(c.samples[:, 0] == math.pi) and np.all(c.samples[:, 1] > 0)
        v = c.parameter
        np.testing.assert_allclose(c.samples[:, 1], v + np.sqrt(math.pi**2 + v**2), atol=1e-8)
        # torus: closed-form branches against the twisted h-cut locus, mod 2 pi
        T = torus_space()
        for p in (np.zeros(2), np.array([0.3, 1.1])):
            got = cut_locus(T, p).samples
            ref = twist_h_cut_locus(T, p, h_cut_locus(T, p).samples).samples
            assert np.max(np.abs(T.wrap_difference(got - ref))) <= 1e-10
        # sphere: the cut locus is p itself
        S = sphere_space(3)
        z = np.array([0.0, 0.6, 0.8, 0.0])
        c = cut_locus(S, z)
        assert len(c.samples) == 1 and np.array_equal(c.samples[0], z)
        tw = twist_h_cut_locus(S, z, h_cut_locus(S, z).samples).samples
        assert np.linalg.norm(tw[0] - z) <= 1e-12


@pytest.mark.criterion(12)
def test_gauss_orthogonality():
    rng = np.random.default_rng(1212)
    worst = 0.0
    with Budget(30.0):
        for space in spaces().values():
            for _ in range(50):
                p = random_point(space, rng)
                y = rng.uniform(0.3, 2) * unit_admissible(space, p, rng)
                V = space.random_tangent(p, rng)
                tau = rng.uniform(0.1, 2.0)
                worst = max(worst, gauss_orthogonality(space, p, y, V, tau))
    assert worst <= 1e-4


@pytest.mark.criterion(13)
def test_projective_criterion():
    rng = np.random.default_rng(1313)
    pts = [rng.uniform(-2, 2, 2) for _ in range(9)]
    with Budget(10.0):
        for W in ([1.0, 0.0], [0.6, 0.8], [S2, S2]):
            space = euclidean_space(2, W)
            ab = to_alpha_beta(space.nav, lambda x: 0.0)
            assert projective_equivalence_verdict(ab, pts)[0]
            for _ in range(3):
                p = rng.uniform(-1, 1, 2)
                y = unit_admissible(space, p, rng)
                assert geodesic_corroboration(space, ab, p, y, 5.0, 256) <= 1e-6
        # Hopf wind on the round sphere in a stereographic chart
        def h(x):
            return 4 / (1 + x @ x) ** 2 * np.eye(3)

        def w(x):
            r2 = x @ x
            return np.array([-x[1] + x[0] * x[2], x[0] + x[1] * x[2], (1 - r2) / 2 + x[2] ** 2])

        from kropina.geometry import VectorField
        nav = NavigationData(MetricField(3, h), VectorField(3, w))
        spts = [rng.uniform(-0.8, 0.8, 3) for _ in range(9)]
        verdict, resid = projective_equivalence_verdict(to_alpha_beta(nav, lambda x: 0.0), spts)
        assert not verdict and resid > 1e-3
        for kappa in (lambda x: 0.0, lambda x: 0.4 * x[0] - 0.1 * x[2] ** 2):
            rep = navigation_parallel_residual(nav, kappa, spts)
            assert rep.identity_residual <= 1e-6
        flat = NavigationData(constant_metric(np.eye(2)), constant_field([0.6, 0.8]))
        rep = navigation_parallel_residual(flat, lambda x: 0.3 * x[1], pts)
        assert rep.identity_residual <= 1e-6


def _cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run([str(a) for a in argv], out, err)
    assert code == 0, err.getvalue()
    return out.getvalue().encode()


@pytest.mark.criterion(14)
def test_cli_determinism(tmp_path):
    with Budget(1.0):
        runs = []
        for k in range(3):
            path = tmp_path / f"geo{k}.csv"
            _cli("geodesic", "--space", "torus", "--point", "0.3,1.1", "--dir", "1,0.5",
                 "--tmax", "10", "--out", path)
            runs.append((path.read_bytes(),
                         _cli("cutlocus", "--space", "cylinder:1,0", "--cover", "--point", "0,0"),
                         _cli("geodesic", "--space", "sphere:3", "--point", "0,0.6,0.8,0",
                              "--dir", "-1,0,0,0.5", "--tmax", "5", "--steps", "256")))
    assert runs[0][0].startswith(b"t,") and len(runs[0][0].splitlines()) == 1026
    assert runs[0] == runs[1] == runs[2]
