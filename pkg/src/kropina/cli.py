"""Command-line front end.

Exit status is 0 on success, 1 on invalid input and 2 on numerical failure.
Failures print a single line ``kropina: <kind>: <reason>`` on stderr, with
kind one of ``validation`` or ``numerical``.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import json
import math
import re
import sys
from typing import Optional, Sequence

import numpy as np

from . import dsl
from .dsl import Binary, Literal, Unary, Variable, to_text
from .geodesics import IntegrationError, kropina_geodesic
from .geometry import GeometryError, field_diagnostics
from .models import (ModelSpaceError, closed_form_distance, cut_locus, cylinder_space,
                     euclidean_space, sphere_space, stereographic_hopf_chart,
                     stereographic_point, torus_space)
from .projective import navigation_parallel_residual, projective_equivalence_verdict
from .separation import (ShootingError, default_workers, polyline_oracle, separation)
from .space import SpaceDefinition, probe_points
from .zermelo import NavigationData, to_alpha_beta


class ValidationFailure(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationFailure(message)

    def exit(self, status=0, message=None):
        if message:
            sys.stderr.write(message)
        raise SystemExit(status)


def fmt(x) -> str:
    """Shortest round-trip text of a float; deterministic across runs."""
    return repr(float(x))


def _vector(text: str, what: str) -> np.ndarray:
    try:
        vals = [float(s) for s in text.split(",")]
    except ValueError:
        raise ValidationFailure(f"{what}: expected comma-separated numbers, got {text!r}") from None
    arr = np.array(vals)
    if not np.all(np.isfinite(arr)):
        raise ValidationFailure(f"{what}: non-finite value")
    return arr


# -- space specs -------------------------------------------------------------------------

@dataclasses.dataclass
class LoadedSpace:
    space: SpaceDefinition
    document: Optional[dsl.SpaceDocument] = None


def load_spec(spec: str, cover: bool = False) -> LoadedSpace:
    """``euclidean:n:c1,..,cn``, ``sphere:n``, ``cylinder:A,B``, ``torus`` or a JSON path."""
    head, _, rest = spec.partition(":")
    if head == "euclidean":
        n_text, _, comps = rest.partition(":")
        try:
            n = int(n_text)
        except ValueError:
            raise ValidationFailure(f"bad dimension in {spec!r}") from None
        return LoadedSpace(euclidean_space(n, _vector(comps, "wind")))
    if head == "sphere":
        try:
            n = int(rest or 3)
        except ValueError:
            raise ValidationFailure(f"bad dimension in {spec!r}") from None
        if cover:
            raise ValidationFailure("--cover does not apply to the sphere")
        return LoadedSpace(sphere_space(n))
    if head == "cylinder":
        A, B = _pair(rest, spec)
        return LoadedSpace(cylinder_space(A, B, cover=cover))
    if head == "torus" and not rest:
        return LoadedSpace(torus_space(cover=cover))
    try:
        doc = dsl.read_document(spec)
    except FileNotFoundError:
        raise ValidationFailure(f"unknown space {spec!r}") from None
    except json.JSONDecodeError as exc:
        raise ValidationFailure(f"{spec}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    space = dsl.load_space(doc)
    if cover:
        space = dataclasses.replace(space, cover=True)
    return LoadedSpace(space, doc)


def _pair(text: str, spec: str) -> tuple:
    v = _vector(text, spec)
    if v.shape != (2,):
        raise ValidationFailure(f"expected two components in {spec!r}")
    return float(v[0]), float(v[1])


def _point(space: SpaceDefinition, text: str, what: str) -> np.ndarray:
    x = _vector(text, what)
    if x.shape != (space.coord_dim,):
        raise ValidationFailure(f"{what}: expected {space.coord_dim} coordinates, got {x.shape[0]}")
    if space.kind == "sphere":
        r = float(np.linalg.norm(x))
        if abs(r - 1.0) > 1e-6:
            raise ValidationFailure(f"{what}: sphere points must be unit vectors (norm {r:.9g})")
        x = x / r
    return x


def _chart_samples(loaded: LoadedSpace, count: int, seed: int):
    """Navigation data on a chart plus probe points in it."""
    space = loaded.space
    if loaded.document is not None:
        return space.nav, list(dsl.probe_grid(loaded.document))
    rng = np.random.default_rng(seed)
    if space.kind == "sphere":
        nav = stereographic_hopf_chart(space.dim)
        pts = [stereographic_point(z) for z in probe_points(space, count, rng)]
        return nav, [x for x in pts if np.linalg.norm(x) < 3.0]
    if space.periodic:
        hi = np.array([p if p is not None else 1.0 for p in space.topology])
        lo = np.array([0.0 if p is not None else -1.0 for p in space.topology])
        return space.nav, [lo + (hi - lo) * rng.uniform(size=space.dim) for _ in range(count)]
    return space.nav, probe_points(space, count, rng)


# -- symbolic (a, b) <-> (h, W) -------------------------------------------------------------

def _lit(v: float) -> dsl.Expr:
    return Literal(v) if v >= 0 else Unary("neg", Literal(-v))


def _const(e) -> Optional[float]:
    if isinstance(e, Literal):
        return e.value
    if isinstance(e, Unary) and e.op == "neg" and isinstance(e.child, Literal):
        return -e.child.value
    return None


def s_add(a, b):
    ca, cb = _const(a), _const(b)
    if ca is not None and cb is not None:
        return _lit(ca + cb)
    if ca == 0:
        return b
    if cb == 0:
        return a
    return Binary("+", a, b)


def s_sub(a, b):
    ca, cb = _const(a), _const(b)
    if ca is not None and cb is not None:
        return _lit(ca - cb)
    if cb == 0:
        return a
    if ca == 0:
        return s_neg(b)
    return Binary("-", a, b)


def s_neg(a):
    c = _const(a)
    if c is not None:
        return _lit(-c)
    if isinstance(a, Unary) and a.op == "neg":
        return a.child
    return Unary("neg", a)


def s_mul(a, b):
    ca, cb = _const(a), _const(b)
    if ca is not None and cb is not None:
        return _lit(ca * cb)
    if ca == 0 or cb == 0:
        return Literal(0.0)
    if ca == 1:
        return b
    if cb == 1:
        return a
    if ca == -1:
        return s_neg(b)
    if cb == -1:
        return s_neg(a)
    return Binary("*", a, b)


def s_div(a, b):
    ca, cb = _const(a), _const(b)
    if cb == 0:
        raise ValidationFailure("division by an identically zero expression")
    if ca is not None and cb is not None:
        return _lit(ca / cb)
    if ca == 0:
        return Literal(0.0)
    if cb == 1:
        return a
    return Binary("/", a, b)


def s_sum(terms):
    out = Literal(0.0)
    for t in terms:
        out = s_add(out, t)
    return out


def s_det(m: list):
    n = len(m)
    if n == 1:
        return m[0][0]
    terms = []
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in m[1:]]
        t = s_mul(m[0][j], s_det(minor))
        terms.append(t if j % 2 == 0 else s_neg(t))
    return s_sum(terms)


def s_adjugate(m: list) -> list:
    n = len(m)
    if n == 1:
        return [[Literal(1.0)]]
    adj = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [row[:j] + row[j + 1:] for k, row in enumerate(m) if k != i]
            c = s_det(minor)
            adj[j][i] = c if (i + j) % 2 == 0 else s_neg(c)
    return adj


def nav_to_ab_document(doc: dsl.SpaceDocument, kappa: dsl.Expr) -> dict:
    n = doc.dim
    ek = Unary("exp", s_neg(kappa))
    a = [[s_mul(ek, doc.metric[i][j]) for j in range(n)] for i in range(n)]
    b = [s_mul(s_mul(Literal(2.0), ek), s_sum(s_mul(doc.metric[i][j], doc.wind[j])
                                              for j in range(n))) for i in range(n)]
    return {
        "dim": n,
        "a": [[to_text(e) for e in row] for row in a],
        "b": [to_text(e) for e in b],
        "kappa": to_text(kappa),
        "constants": dict(doc.constants),
        "topology": _topology_json(doc.topology),
        "chart_name": doc.chart_name,
    }


def ab_to_nav_document(data: dict) -> dict:
    """h = (4/b^2) a and W = a^-1 b / 2 with b^2 = a^ij b_i b_j, symbolically."""
    try:
        n = int(data["dim"])
        a_src, b_src = data["a"], data["b"]
    except KeyError as exc:
        raise ValidationFailure(f"missing key {exc.args[0]!r}") from None
    names = tuple(data.get("constants", {}))
    if len(a_src) != n or any(len(r) != n for r in a_src) or len(b_src) != n:
        raise ValidationFailure(f"a must be {n}x{n} and b of length {n}")
    a = [[dsl.parse_expression(str(s), n, names) for s in row] for row in a_src]
    b = [dsl.parse_expression(str(s), n, names) for s in b_src]
    det = s_det(a)
    adj = s_adjugate(a)
    b_up = [s_sum(s_mul(adj[i][j], b[j]) for j in range(n)) for i in range(n)]
    b2 = s_div(s_sum(s_mul(b[i], b_up[i]) for i in range(n)), det)
    scale = s_div(Literal(4.0), b2)
    h = [[s_mul(scale, a[i][j]) for j in range(n)] for i in range(n)]
    wind = [s_div(b_up[i], s_mul(Literal(2.0), det)) for i in range(n)]
    return {
        "dim": n,
        "metric": [[to_text(e) for e in row] for row in h],
        "wind": [to_text(e) for e in wind],
        "kappa": to_text(Unary("log", scale)),
        "constants": dict(data.get("constants", {})),
        "topology": data.get("topology", ["unbounded"] * n),
        "strong": bool(data.get("strong", False)),
        "chart_name": str(data.get("chart_name", "")),
    }


def _topology_json(topology) -> list:
    return ["unbounded" if p is None else {"periodic": p} for p in topology]


# -- subcommands ---------------------------------------------------------------------------------

def _write(path: Optional[str], text: str, stdout):
    if path is None or path == "-":
        stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def cmd_convert(args, stdout) -> int:
    with open(args.space, "rb") as fh:
        try:
            data = json.loads(fh.read())
        except json.JSONDecodeError as exc:
            raise ValidationFailure(f"{args.space}: invalid JSON ({exc.msg})") from None
    if args.source == "nav":
        doc = dsl.parse_document(data)
        kappa = dsl.parse_expression(args.kappa or "0", doc.dim, tuple(doc.constants))
        dsl.load_space(dataclasses.replace(doc, strong=False))
        out = nav_to_ab_document(doc, kappa)
    else:
        if args.kappa is not None:
            raise ValidationFailure("--kappa applies to --from nav only")
        out = ab_to_nav_document(data)
        dsl.load_space(dsl.parse_document(dict(out, strong=False)))
    _write(args.out, json.dumps(out, indent=2, sort_keys=True) + "\n", stdout)
    return 0


def _svg(paths: list, guides: list, size: int = 480) -> str:
    """Polylines scaled into a square canvas; ``guides`` are dashed lines."""
    pts = np.vstack([p for p in paths if len(p)] + [g for g in guides]) if paths else np.zeros((1, 2))
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = float(max(hi[0] - lo[0], hi[1] - lo[1], 1e-9))
    pad = 20

    def tr(p):
        x = pad + (p[0] - lo[0]) / span * (size - 2 * pad)
        y = size - pad - (p[1] - lo[1]) / span * (size - 2 * pad)
        return f"{x:.3f},{y:.3f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<rect width="{size}" height="{size}" fill="white"/>']
    for g in guides:
        out.append(f'<polyline points="{" ".join(tr(p) for p in g)}" fill="none" '
                   'stroke="#999" stroke-dasharray="4 3"/>')
    for p in paths:
        if len(p) == 1:
            out.append(f'<circle cx="{tr(p[0]).split(",")[0]}" cy="{tr(p[0]).split(",")[1]}" '
                       'r="3" fill="black"/>')
        elif len(p):
            out.append(f'<polyline points="{" ".join(tr(q) for q in p)}" fill="none" '
                       'stroke="black" stroke-width="1.2"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _plot_coords(space: SpaceDefinition, X: np.ndarray, plane: tuple) -> np.ndarray:
    i, j = plane
    if max(i, j) >= X.shape[1]:
        raise ValidationFailure(f"--plane index out of range for {X.shape[1]} coordinates")
    return X[:, [i, j]]


def _period_guides(space: SpaceDefinition, X: np.ndarray) -> list:
    if space.kind not in ("cylinder", "torus") or X.shape[1] != 2 or not len(X):
        return []
    lo, hi = X.min(axis=0), X.max(axis=0)
    guides = []
    for axis, per in enumerate(space.topology):
        if per is None:
            continue
        other = 1 - axis
        for k in range(int(math.floor(lo[axis] / per)), int(math.ceil(hi[axis] / per)) + 1):
            line = np.zeros((2, 2))
            line[:, axis] = k * per
            line[:, other] = [lo[other], hi[other]]
            guides.append(line)
    return guides


def _emit(args, header, rows, plot_pts, space, stdout, doc: Optional[dict] = None):
    csv_text = _csv(header, rows)
    if args.format == "csv":
        _write(args.out, csv_text, stdout)
    elif args.format == "json":
        obj = doc if doc is not None else {"columns": list(header)}
        obj = dict(obj, rows=[[float(v) for v in r] for r in rows])
        _write(args.out, json.dumps(obj, sort_keys=True) + "\n", stdout)
    else:
        if args.out is None or args.out == "-":
            raise ValidationFailure("--format svg needs --out FILE")
        plane = tuple(int(v) for v in _vector(args.plane, "--plane")) if args.plane else (0, 1)
        if len(plane) != 2:
            raise ValidationFailure("--plane takes two coordinate indices")
        P = _plot_coords(space, plot_pts, plane)
        guides = _period_guides(space, plot_pts) if plane == (0, 1) else []
        _write(args.out, _svg([P], guides), stdout)
        base = args.out[:-4] if args.out.endswith(".svg") else args.out
        _write(base + ".csv", csv_text, stdout)
    return 0


def cmd_geodesic(args, stdout) -> int:
    space = load_spec(args.space, args.cover).space
    p = _point(space, args.point, "--point")
    y = _vector(args.dir, "--dir")
    if y.shape != (space.coord_dim,):
        raise ValidationFailure(f"--dir: expected {space.coord_dim} components")
    if space.kind == "sphere" and abs(float(p @ y)) > 1e-9 * max(1.0, float(np.linalg.norm(y))):
        raise ValidationFailure("--dir must be tangent to the sphere at --point")
    if not args.tmax > 0:
        raise ValidationFailure("--tmax must be positive")
    path = kropina_geodesic(space, p, y, args.tmax, args.steps)
    if not np.all(path.admissible):
        raise IntegrationError("geodesic left the conic domain")
    n = space.coord_dim
    header = (["t"] + [f"x{i + 1}" for i in range(n)] + [f"v{i + 1}" for i in range(n)] + ["F"])
    rows = [[t, *x, *v, f] for t, x, v, f in
            zip(path.params, path.points, path.velocities, path.f_values)]
    return _emit(args, header, rows, path.points, space, stdout,
                 {"columns": header, "scale": path.scale, "truncated": path.truncated})


def cmd_distance(args, stdout) -> int:
    space = load_spec(args.space, args.cover).space
    p = _point(space, args.source, "--from")
    q = _point(space, args.target, "--to")
    res = separation(space, p, q)
    oracle = None
    if args.oracle:
        segs = 16 if space.kind == "sphere" else 8
        oracle = polyline_oracle(space, p, q, segments=segs, restarts=4, seed=args.seed,
                                 workers=default_workers())
    direction = None if res.initial_direction is None else [float(v) for v in res.initial_direction]
    if args.format == "json":
        obj = {
            "status": res.status,
            "value": res.value if math.isfinite(res.value) else None,
            "tau_star": res.tau_star if math.isfinite(res.tau_star) else None,
            "initial_direction": direction,
            "minimizing_directions": len(res.directions),
            "evaluations": res.evaluations,
            "capped": res.capped,
        }
        if args.oracle:
            obj["oracle"] = oracle if math.isfinite(oracle) else None
        stdout.write(json.dumps(obj, sort_keys=True) + "\n")
        return 0
    lines = [res.status if not res.finite else f"{res.status} {fmt(res.value)}"]
    if res.finite:
        lines.append(f"tau_star={fmt(res.tau_star)}")
        if direction is not None:
            lines.append("initial_direction=" + ",".join(fmt(v) for v in direction))
        lines.append(f"minimizing_directions={len(res.directions)}")
    lines.append(f"evaluations={res.evaluations}")
    lines.append(f"capped={'true' if res.capped else 'false'}")
    if args.oracle:
        lines.append(f"oracle={fmt(oracle)}")
    stdout.write("\n".join(lines) + "\n")
    return 0


def cmd_cutlocus(args, stdout) -> int:
    space = load_spec(args.space, args.cover).space
    p = _point(space, args.point, "--point")
    if args.samples < 2:
        raise ValidationFailure("--samples must be at least 2")
    curve = cut_locus(space, p, args.samples)
    pts = np.array(curve.samples, dtype=float)
    if space.periodic and len(pts):
        per = np.array([t if t is not None else np.inf for t in space.topology])
        finite = np.isfinite(per)
        pts[:, finite] = np.mod(pts[:, finite], per[finite])
    n = space.coord_dim
    header = ["param"] + [f"x{i + 1}" for i in range(n)]
    rows = [[t, *x] for t, x in zip(curve.parameter, pts)]
    if args.format == "svg" and len(pts):
        return _emit(args, header, rows, pts, space, stdout)
    return _emit(args, header, rows, pts, space, stdout, {"columns": header})


def cmd_check(args, stdout) -> int:
    loaded = load_spec(args.space, args.cover)
    space = loaded.space
    mode = args.mode or "killing"
    lines = []
    if mode == "killing":
        nav, pts = _chart_samples(loaded, args.samples, args.seed)
        d = field_diagnostics(nav.h, nav.W, pts)
        lines += [f"killing_residual={fmt(d.killing_residual)}",
                  f"parallel_residual={fmt(d.parallel_residual)}",
                  f"closedness_residual={fmt(d.closedness_residual)}",
                  f"unit_deviation={fmt(d.unit_deviation)}",
                  f"samples={d.samples}",
                  f"strong={'true' if d.unit_deviation <= 1e-6 and d.killing_residual <= 1e-5 else 'false'}"]
    elif mode == "projective":
        nav, pts = _chart_samples(loaded, args.samples, args.seed)
        kappa = _kappa(args.kappa, nav, loaded)
        ab = to_alpha_beta(nav, kappa)
        verdict, resid = projective_equivalence_verdict(ab, pts)
        rep = navigation_parallel_residual(nav, kappa, pts)
        lines += [f"projectively_equivalent={'true' if verdict else 'false'}",
                  f"max_beta_derivative={fmt(resid)}",
                  f"max_W_derivative={fmt(rep.max_W_residual)}",
                  f"max_kappa_gradient={fmt(rep.max_kappa_grad)}",
                  f"identity_residual={fmt(rep.identity_residual)}",
                  f"samples={len(pts)}"]
    else:
        if space.kind == "custom":
            raise ValidationFailure("--closedform needs a built-in model space")
        rng = np.random.default_rng(args.seed)
        worst = 0.0
        agree = 0
        pairs = probe_points(space, 2 * args.samples, rng, radius=3.0)
        for p, q in zip(pairs[0::2], pairs[1::2]):
            ref = closed_form_distance(space, p, q)
            res = separation(space, p, q)
            if math.isfinite(ref) == res.finite:
                agree += 1
            if math.isfinite(ref) and res.finite:
                worst = max(worst, abs(ref - res.value))
        lines += [f"pairs={args.samples}", f"status_agreement={agree}",
                  f"max_abs_error={fmt(worst)}"]
    stdout.write("\n".join(lines) + "\n")
    return 0


def _kappa(text: Optional[str], nav: NavigationData, loaded: LoadedSpace):
    if text is None:
        return lambda x: 0.0
    names = tuple(loaded.document.constants) if loaded.document is not None else ()
    consts = loaded.document.constants if loaded.document is not None else {}
    expr = dsl.parse_expression(text, nav.dim, names)
    return dsl.compile_expression(expr, consts)


# -- entry points ------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kropina", description="Strong Kropina spaces: geodesics, "
                     "separation, cut loci and diagnostics.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("convert", help="navigation data <-> (a, b)")
    c.add_argument("--from", dest="source", choices=("ab", "nav"), required=True)
    c.add_argument("--space", required=True, help="input JSON document")
    c.add_argument("--kappa", help="conformal factor expression (nav -> ab)")
    c.add_argument("--out", help="output file (default stdout)")

    g = sub.add_parser("geodesic", help="trace a unit-speed geodesic")
    g.add_argument("--space", required=True)
    g.add_argument("--point", required=True)
    g.add_argument("--dir", required=True)
    g.add_argument("--tmax", type=float, required=True)
    g.add_argument("--steps", type=int, default=1024)
    g.add_argument("--cover", action="store_true")
    g.add_argument("--format", choices=("csv", "json", "svg"), default="csv")
    g.add_argument("--plane", help="coordinate indices to plot, e.g. 0,1")
    g.add_argument("--out")

    d = sub.add_parser("distance", help="separation d_F(p, q)")
    d.add_argument("--space", required=True)
    d.add_argument("--from", dest="source", required=True)
    d.add_argument("--to", dest="target", required=True)
    d.add_argument("--cover", action="store_true")
    d.add_argument("--oracle", action="store_true", help="also run the polyline oracle")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--format", choices=("text", "json"), default="text")

    k = sub.add_parser("cutlocus", help="emit the cut locus of a point")
    k.add_argument("--space", required=True)
    k.add_argument("--point", required=True)
    k.add_argument("--samples", type=int, default=257)
    k.add_argument("--cover", action="store_true")
    k.add_argument("--format", choices=("csv", "json", "svg"), default="csv")
    k.add_argument("--plane")
    k.add_argument("--out")

    h = sub.add_parser("check", help="diagnostics report")
    h.add_argument("--space", required=True)
    grp = h.add_mutually_exclusive_group()
    grp.add_argument("--killing", dest="mode", action="store_const", const="killing")
    grp.add_argument("--projective", dest="mode", action="store_const", const="projective")
    grp.add_argument("--closedform", dest="mode", action="store_const", const="closedform")
    h.add_argument("--kappa")
    h.add_argument("--samples", type=int, default=25)
    h.add_argument("--seed", type=int, default=0)
    h.add_argument("--cover", action="store_true")
    return parser


_COMMANDS = {"convert": cmd_convert, "geodesic": cmd_geodesic, "distance": cmd_distance,
             "cutlocus": cmd_cutlocus, "check": cmd_check}

_NUMERICAL = (IntegrationError, ShootingError, ArithmeticError, np.linalg.LinAlgError,
              FloatingPointError, RuntimeError)
_VALIDATION = (ValueError, KeyError, OSError, TypeError)


def _fail(kind: str, exc: BaseException, stderr) -> None:
    reason = " ".join(str(exc).split()) or type(exc).__name__
    stderr.write(f"kropina: {kind}: {reason}\n")


_NEGATIVE = re.compile(r"^-(\d|\.\d)")


def _join_negative_values(argv: Sequence[str]) -> list:
    """Let ``--point -1,0`` through; argparse would read -1,0 as a flag."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok.startswith("--") and "=" not in tok:
            nxt = next(it, None)
            if nxt is not None and _NEGATIVE.match(nxt):
                out.append(f"{tok}={nxt}")
                continue
            out.append(tok)
            if nxt is not None:
                out.append(nxt)
            continue
        out.append(tok)
    return out


def run(argv: Sequence[str], stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(_join_negative_values(argv))
        if getattr(args, "steps", 1) < 1:
            raise ValidationFailure("--steps must be positive")
        if getattr(args, "samples", 2) < 1:
            raise ValidationFailure("--samples must be positive")
        return _COMMANDS[args.command](args, stdout)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except _NUMERICAL as exc:
        _fail("numerical", exc, stderr)
        return 2
    except (ValidationFailure, GeometryError, ModelSpaceError, dsl.DSLError,
            dsl.SpaceValidationError) as exc:
        _fail("validation", exc, stderr)
        return 1
    except _VALIDATION as exc:
        _fail("validation", exc, stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))
