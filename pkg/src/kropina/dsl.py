"""A small expression language for metric and wind components.

Grammar, loosest binding first::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?          # right-associative
    primary := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

So ``-x1^2`` is ``-(x1^2)`` and ``2^-1`` is ``0.5``. Error offsets are byte
offsets into the UTF-8 encoded source.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from .geometry import (FieldDiagnostics, MetricField, VectorField,
                       field_diagnostics, halton_samples)
from .space import SpaceDefinition

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")
BUILTIN_CONSTANTS = {"pi": math.pi}


class DSLError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnexpectedToken(DSLError):
    pass


class UnbalancedParenthesis(DSLError):
    pass


class UnknownFunction(DSLError):
    pass


class UnknownVariable(DSLError):
    pass


class DomainError(ArithmeticError):
    pass


class UnboundVariable(KeyError):
    pass


class SpaceValidationError(ValueError):
    def __init__(self, message: str, diagnostics: Optional[FieldDiagnostics] = None):
        super().__init__(message)
        self.diagnostics = diagnostics


# -- AST ------------------------------------------------------------------

@dataclass(frozen=True)
class Literal:
    value: float


@dataclass(frozen=True)
class Variable:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" or a function name
    child: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Literal, Variable, Unary, Binary]


# -- tokenizer --------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    offset: int


def tokenize(text: str) -> list:
    tokens = []
    pos = 0
    byte = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise UnexpectedToken(f"unexpected character {text[pos]!r}", byte)
        if m.lastgroup != "ws":
            tokens.append(Token(m.lastgroup, m.group(), byte))
        byte += len(m.group().encode("utf-8"))
        pos = m.end()
    tokens.append(Token("end", "", byte))
    return tokens


# -- parser -----------------------------------------------------------------

_XVAR = re.compile(r"x([1-9][0-9]*)$")


class _Parser:
    def __init__(self, text: str, dim: Optional[int], constants: Sequence[str]):
        self.tokens = tokenize(text)
        self.i = 0
        self.dim = dim
        self.constants = set(constants) | set(BUILTIN_CONSTANTS)
        self.open_parens = []

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect_close(self):
        t = self.tok
        if t.kind == "op" and t.text == ")":
            self.open_parens.pop()
            self.advance()
            return
        if t.kind == "end":
            raise UnbalancedParenthesis("missing ')'", t.offset)
        raise UnexpectedToken(f"expected ')' but found {t.text!r}", t.offset)

    def parse(self) -> Expr:
        node = self.expr()
        t = self.tok
        if t.kind != "end":
            if t.text == ")":
                raise UnbalancedParenthesis("unmatched ')'", t.offset)
            raise UnexpectedToken(f"unexpected {t.text!r}", t.offset)
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            return Binary("^", base, self.unary())
        return base

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Literal(float(t.text))
        if t.kind == "name":
            self.advance()
            if self.tok.kind == "op" and self.tok.text == "(":
                if t.text not in FUNCTIONS:
                    raise UnknownFunction(f"unknown function {t.text!r}", t.offset)
                self.open_parens.append(self.advance().offset)
                arg = self.expr()
                self.expect_close()
                return Unary(t.text, arg)
            self.check_variable(t)
            return Variable(t.text)
        if t.kind == "op" and t.text == "(":
            self.open_parens.append(self.advance().offset)
            node = self.expr()
            self.expect_close()
            return node
        if t.kind == "end":
            if self.open_parens:
                raise UnbalancedParenthesis("missing ')'", t.offset)
            raise UnexpectedToken("unexpected end of input", t.offset)
        if t.text == ")":
            raise UnbalancedParenthesis("unmatched ')'", t.offset)
        raise UnexpectedToken(f"unexpected {t.text!r}", t.offset)

    def check_variable(self, t: Token):
        if t.text in FUNCTIONS:
            raise UnexpectedToken(f"function {t.text!r} needs an argument", t.offset)
        if t.text in self.constants:
            return
        m = _XVAR.match(t.text)
        if m and (self.dim is None or int(m.group(1)) <= self.dim):
            return
        raise UnknownVariable(f"unknown variable {t.text!r}", t.offset)


def parse_expression(text: str, dim: Optional[int] = None,
                     constants: Sequence[str] = ()) -> Expr:
    """Parse text into an AST.

    With ``dim`` given only x1..x<dim> are accepted as coordinates; otherwise
    any x<k>. ``constants`` lists further admissible names.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    return _Parser(text, dim, constants).parse()


# -- printing -------------------------------------------------------------

def to_text(e: Expr) -> str:
    """Fully parenthesized source form; parses back to the same tree."""
    if isinstance(e, Literal):
        return repr(float(e.value))
    if isinstance(e, Variable):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{to_text(e.child)})"
        return f"{e.op}({to_text(e.child)})"
    return f"({to_text(e.left)} {e.op} {to_text(e.right)})"


# -- evaluation -----------------------------------------------------------

def _power(a: float, b: float) -> float:
    if a < 0 and not float(b).is_integer():
        raise DomainError(f"negative base {a} with non-integer exponent {b}")
    if a == 0 and b < 0:
        raise DomainError("zero raised to a negative power")
    try:
        return math.pow(a, b)
    except (OverflowError, ValueError) as exc:
        raise DomainError(str(exc)) from None


def _div(a: float, b: float) -> float:
    if b == 0:
        raise DomainError("division by zero")
    return a / b


def _log(a: float) -> float:
    if not a > 0:
        raise DomainError(f"log of non-positive value {a}")
    return math.log(a)


def _sqrt(a: float) -> float:
    if a < 0:
        raise DomainError(f"sqrt of negative value {a}")
    return math.sqrt(a)


def _exp(a: float) -> float:
    try:
        return math.exp(a)
    except OverflowError:
        raise DomainError(f"exp overflow at {a}") from None


_UNARY = {"neg": lambda a: -a, "sin": math.sin, "cos": math.cos,
          "exp": _exp, "log": _log, "sqrt": _sqrt}
_BINARY = {"+": lambda a, b: a + b, "-": lambda a, b: a - b,
           "*": lambda a, b: a * b, "/": _div, "^": _power}


def evaluate(e: Expr, bindings: Mapping[str, float]) -> float:
    if isinstance(e, Literal):
        return float(e.value)
    if isinstance(e, Variable):
        if e.name in bindings:
            return float(bindings[e.name])
        if e.name in BUILTIN_CONSTANTS:
            return BUILTIN_CONSTANTS[e.name]
        raise UnboundVariable(e.name)
    if isinstance(e, Unary):
        return _UNARY[e.op](evaluate(e.child, bindings))
    return _BINARY[e.op](evaluate(e.left, bindings), evaluate(e.right, bindings))


def compile_expression(e: Expr, constants: Mapping[str, float]) -> Callable[[np.ndarray], float]:
    """Closure evaluating e at a coordinate vector; constants are baked in."""
    if isinstance(e, Literal):
        c = float(e.value)
        return lambda x: c
    if isinstance(e, Variable):
        if e.name in constants:
            c = float(constants[e.name])
            return lambda x: c
        if e.name in BUILTIN_CONSTANTS:
            c = BUILTIN_CONSTANTS[e.name]
            return lambda x: c
        m = _XVAR.match(e.name)
        if m is None:
            raise UnboundVariable(e.name)
        k = int(m.group(1)) - 1
        return lambda x: float(x[k])
    if isinstance(e, Unary):
        f = _UNARY[e.op]
        g = compile_expression(e.child, constants)
        return lambda x: f(g(x))
    f = _BINARY[e.op]
    left = compile_expression(e.left, constants)
    right = compile_expression(e.right, constants)
    return lambda x: f(left(x), right(x))


def _batch_check(bad, message: str):
    if np.any(bad):
        raise DomainError(message)


def _b_power(a, b):
    _batch_check((a < 0) & (np.floor(b) != b), "negative base with non-integer exponent")
    _batch_check((a == 0) & (b < 0), "zero raised to a negative power")
    with np.errstate(over="ignore"):
        out = np.power(a, b)
    _batch_check(~np.isfinite(out), "power overflow")
    return out


def _b_div(a, b):
    _batch_check(b == 0, "division by zero")
    return a / b


def _b_exp(a):
    with np.errstate(over="ignore"):
        out = np.exp(a)
    _batch_check(np.isinf(out), "exp overflow")
    return out


def _b_log(a):
    _batch_check(~(a > 0), "log of non-positive value")
    return np.log(a)


def _b_sqrt(a):
    _batch_check(a < 0, "sqrt of negative value")
    return np.sqrt(a)


_B_UNARY = {"neg": np.negative, "sin": np.sin, "cos": np.cos,
            "exp": _b_exp, "log": _b_log, "sqrt": _b_sqrt}
_B_BINARY = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": _b_div, "^": _b_power}


def compile_batch(e: Expr, constants: Mapping[str, float]) -> Callable[[np.ndarray], np.ndarray]:
    """Like compile_expression, but maps an (N, n) array of points to N values."""

    def build(node):
        if isinstance(node, Literal):
            c = float(node.value)
            return lambda X: np.float64(c)
        if isinstance(node, Variable):
            if node.name in constants or node.name in BUILTIN_CONSTANTS:
                c = float(constants.get(node.name, BUILTIN_CONSTANTS.get(node.name)))
                return lambda X: np.float64(c)
            m = _XVAR.match(node.name)
            if m is None:
                raise UnboundVariable(node.name)
            k = int(m.group(1)) - 1
            return lambda X: X[:, k]
        if isinstance(node, Unary):
            f, g = _B_UNARY[node.op], build(node.child)
            return lambda X: f(g(X))
        f, left, right = _B_BINARY[node.op], build(node.left), build(node.right)
        return lambda X: f(np.asarray(left(X), dtype=float), np.asarray(right(X), dtype=float))

    inner = build(e)

    def run(X):
        X = np.asarray(X, dtype=float)
        return np.broadcast_to(inner(X), (X.shape[0],)).astype(float)

    return run


# -- space documents --------------------------------------------------------

@dataclass(frozen=True)
class SpaceDocument:
    dim: int
    metric: tuple  # dim x dim of Expr
    wind: tuple    # dim of Expr
    constants: dict
    topology: tuple  # None or period per coordinate
    strong: bool = True
    chart_name: str = ""
    box: Optional[tuple] = None


def parse_document(data: Union[str, bytes, Mapping]) -> SpaceDocument:
    """Build a SpaceDocument from JSON text or an already-decoded mapping."""
    if isinstance(data, (str, bytes)):
        data = json.loads(data)
    try:
        dim = int(data["dim"])
        metric_src = data["metric"]
        wind_src = data["wind"]
    except KeyError as exc:
        raise SpaceValidationError(f"missing key {exc.args[0]!r}") from None
    if dim < 1:
        raise SpaceValidationError("dim must be positive")
    constants = {str(k): float(v) for k, v in dict(data.get("constants", {})).items()}
    names = tuple(constants)
    if len(metric_src) != dim or any(len(row) != dim for row in metric_src):
        raise SpaceValidationError(f"metric must be a {dim}x{dim} grid")
    if len(wind_src) != dim:
        raise SpaceValidationError(f"wind must have {dim} entries")
    metric = tuple(tuple(parse_expression(str(s), dim, names) for s in row) for row in metric_src)
    wind = tuple(parse_expression(str(s), dim, names) for s in wind_src)
    topo_src = data.get("topology", ["unbounded"] * dim)
    if len(topo_src) != dim:
        raise SpaceValidationError(f"topology must have {dim} entries")
    topology = []
    for tag in topo_src:
        if tag == "unbounded":
            topology.append(None)
        elif isinstance(tag, Mapping) and "periodic" in tag:
            per = float(tag["periodic"])
            if not per > 0:
                raise SpaceValidationError("period must be positive")
            topology.append(per)
        else:
            raise SpaceValidationError(f"bad topology tag {tag!r}")
    box = data.get("box")
    if box is not None:
        box = tuple((float(lo), float(hi)) for lo, hi in box)
        if len(box) != dim:
            raise SpaceValidationError(f"box must have {dim} intervals")
    return SpaceDocument(dim, metric, wind, constants, tuple(topology),
                         bool(data.get("strong", True)), str(data.get("chart_name", "")), box)


def read_document(path) -> SpaceDocument:
    with open(path, "rb") as fh:
        return parse_document(fh.read())


def document_to_json(doc: SpaceDocument) -> dict:
    out = {
        "dim": doc.dim,
        "metric": [[to_text(e) for e in row] for row in doc.metric],
        "wind": [to_text(e) for e in doc.wind],
        "constants": dict(doc.constants),
        "topology": ["unbounded" if p is None else {"periodic": p} for p in doc.topology],
        "strong": doc.strong,
        "chart_name": doc.chart_name,
    }
    if doc.box is not None:
        out["box"] = [list(b) for b in doc.box]
    return out


def probe_box(doc: SpaceDocument) -> tuple:
    if doc.box is not None:
        return tuple(b[0] for b in doc.box), tuple(b[1] for b in doc.box)
    low = [0.0 if p is not None else -1.0 for p in doc.topology]
    high = [p if p is not None else 1.0 for p in doc.topology]
    return tuple(low), tuple(high)


def probe_grid(doc: SpaceDocument) -> np.ndarray:
    low, high = probe_box(doc)
    return halton_samples(5 ** min(doc.dim, 3), low, high)


def _compiled_fields(doc: SpaceDocument):
    n = doc.dim
    cells = [[compile_expression(e, doc.constants) for e in row] for row in doc.metric]
    comps = [compile_expression(e, doc.constants) for e in doc.wind]

    def h(x):
        m = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                m[i, j] = cells[i][j](x)
        return m

    def w(x):
        return np.array([c(x) for c in comps])

    return MetricField(n, h), VectorField(n, w)


def _wind_batch(doc: SpaceDocument):
    comps = [compile_batch(e, doc.constants) for e in doc.wind]
    return lambda X: np.column_stack([c(X) for c in comps])


def load_space(doc: SpaceDocument) -> SpaceDefinition:
    """Compile a document into a validated SpaceDefinition."""
    metric, wind = _compiled_fields(doc)
    grid = probe_grid(doc)
    for x in grid:
        try:
            raw = metric.func(x)
        except DomainError as exc:
            raise SpaceValidationError(f"metric undefined at {x.tolist()}: {exc}") from None
        asym = float(np.max(np.abs(raw - raw.T)))
        if asym > 1e-12 * max(1.0, float(np.max(np.abs(raw)))):
            raise SpaceValidationError(f"metric not symmetric at {x.tolist()} (by {asym:.3e})")
    try:
        diag = field_diagnostics(metric, wind, grid)
    except (DomainError, ValueError) as exc:
        raise SpaceValidationError(f"diagnostics failed: {exc}") from None
    if diag.unit_deviation > 1e-6:
        raise SpaceValidationError(
            f"wind is not unit: unit_deviation={diag.unit_deviation:.6g} "
            f"near {list(diag.worst_point)}", diag)
    if doc.strong and diag.killing_residual > 1e-5:
        raise SpaceValidationError(
            f"wind is not Killing: killing_residual={diag.killing_residual:.6g} "
            f"near {list(diag.worst_point)}", diag)
    box = None
    if any(p is None for p in doc.topology):
        low, high = probe_box(doc)
        if doc.box is not None:
            box = (np.array(low), np.array(high))
    return SpaceDefinition(
        name=doc.chart_name or "custom",
        dim=doc.dim,
        metric=metric,
        wind=wind,
        topology=doc.topology,
        box=box,
        kind="custom",
        params={"diagnostics": diag, "wind_batch": _wind_batch(doc)},
    )
