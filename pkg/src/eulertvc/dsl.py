"""Problem-file language: lexer, recursive-descent parser and canonical printer.

A problem file is line oriented::

    order N = 3
    vars c
    params alpha=1.0 beta=0.5 gamma=0.25
    utility U = (c(t) - alpha)^2 + beta*c(t+1) + gamma*c(t+2)
    init c(0)=1.0
    perturb p = step(t0=1, level=1.0)

Variables are written ``name(t+j)`` where ``j`` is the lag offset inside the
stage window; ``t`` alone is the time symbol.  Unary minus binds looser than
``^`` so ``-x^2`` means ``-(x^2)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional, Union

__all__ = [
    "DSLError",
    "LexError",
    "ParseError",
    "SemanticError",
    "Token",
    "Const",
    "Param",
    "Time",
    "Var",
    "Unary",
    "Binary",
    "Expr",
    "PerturbationSpec",
    "ProblemSpec",
    "tokenize",
    "parse_expr",
    "parse_problem",
    "format_expr",
    "print_canonical",
    "iter_nodes",
    "max_lag",
    "uses_time",
]

RESERVED = frozenset({"t", "ln", "exp"})


class DSLError(ValueError):
    """Base class for problem-file errors; carries a 1-based (line, column)."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.message = message
        self.line = line
        self.col = col
        where = f"{line}:{col}: " if line else ""
        super().__init__(f"{where}{message}")

    @property
    def position(self) -> tuple[int, int]:
        return (self.line, self.col)


class LexError(DSLError):
    pass


class ParseError(DSLError):
    pass


class SemanticError(DSLError):
    pass


# --------------------------------------------------------------------------
# Lexer


class Token(NamedTuple):
    kind: str
    text: str
    line: int
    col: int

    @property
    def value(self) -> Union[int, float, str]:
        if self.kind == "int":
            return int(self.text)
        if self.kind == "real":
            return float(self.text)
        return self.text


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<newline>\n)
  | (?P<real>(?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<lparen>\()
  | (?P<rparen>\))
  | (?P<plus>\+)
  | (?P<minus>-)
  | (?P<star>\*)
  | (?P<slash>/)
  | (?P<caret>\^)
  | (?P<equals>=)
  | (?P<comma>,)
    """,
    re.VERBOSE,
)


def tokenize(source: str) -> list[Token]:
    """Split ``source`` into tokens, dropping whitespace and ``#`` comments.

    Line breaks are kept as ``newline`` tokens because the file grammar is
    line oriented.  Raises :class:`LexError` on the first illegal character.
    """
    tokens: list[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        col = pos - line_start + 1
        if m is None:
            raise LexError(f"illegal character {source[pos]!r}", line, col)
        kind = m.lastgroup
        if kind == "newline":
            tokens.append(Token("newline", "\n", line, col))
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, col))
        pos = m.end()
    return tokens


# --------------------------------------------------------------------------
# Expression tree
#
# ``pos`` is excluded from equality so trees compare structurally.

Pos = Optional[tuple[int, int]]


@dataclass(frozen=True)
class Const:
    value: float
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Param:
    name: str
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Time:
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Var:
    """Reference to component ``comp`` (0-based) at lag ``lag`` in the window."""

    comp: int
    lag: int
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" | "ln" | "exp"
    operand: "Expr"
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Binary:
    op: str  # "+" | "-" | "*" | "/" | "^"
    left: "Expr"
    right: "Expr"
    pos: Pos = field(default=None, compare=False, repr=False)


Expr = Union[Const, Param, Time, Var, Unary, Binary]


def iter_nodes(expr: Expr) -> Iterator[Expr]:
    stack = [expr]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, Unary):
            stack.append(node.operand)
        elif isinstance(node, Binary):
            stack.extend((node.right, node.left))


def max_lag(expr: Expr) -> int:
    """Largest lag offset referenced, or -1 when no variable appears."""
    return max((n.lag for n in iter_nodes(expr) if isinstance(n, Var)), default=-1)


def uses_time(expr: Expr) -> bool:
    return any(isinstance(n, Time) for n in iter_nodes(expr))


# --------------------------------------------------------------------------
# Problem types


@dataclass(frozen=True)
class PerturbationSpec:
    """A perturbation family q(t).

    ``kind`` is ``"expr"`` (one expression in ``t`` per component, or a single
    one broadcast), ``"step"`` (zero at t=0, linear ramp, then ``level`` from
    ``t0`` on) or ``"scaled"`` (``alpha`` times the optimal path for t >= 1).
    """

    kind: str
    exprs: tuple = ()
    t0: int = 1
    level: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        if self.kind not in ("expr", "step", "scaled"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "step" and self.t0 < 1:
            raise ValueError("step perturbation needs t0 >= 1")
        if self.kind == "scaled" and not 0.0 < self.alpha < 1.0:
            raise ValueError("scaled perturbation needs 0 < alpha < 1")
        if self.kind == "expr" and not self.exprs:
            raise ValueError("expression perturbation needs at least one expression")


@dataclass(frozen=True)
class ProblemSpec:
    order: int
    dim: int
    var_names: tuple
    params: dict
    utility: Expr
    pinned_initial: tuple = ()  # (time, component 0-based, value)
    perturbations: dict = field(default_factory=dict)

    @property
    def pinned_times(self) -> tuple:
        return tuple(sorted({t for t, _, _ in self.pinned_initial}))

    def pins_complete(self) -> bool:
        """True when every component is pinned at every time 0..N-2."""
        have = {(t, i) for t, i, _ in self.pinned_initial}
        return all((t, i) in have for t in range(self.order - 1) for i in range(self.dim))

    def pin_array(self):
        """Pinned values as ``{time: {component: value}}``."""
        out: dict = {}
        for t, i, v in self.pinned_initial:
            out.setdefault(t, {})[i] = v
        return out


# --------------------------------------------------------------------------
# Parser


class _Parser:
    def __init__(self, tokens: list[Token], var_names: tuple, allow_vars: bool = True):
        self.tokens = tokens
        self.i = 0
        self.var_names = var_names
        self.allow_vars = allow_vars

    # token helpers
    def peek(self, k: int = 0) -> Optional[Token]:
        j = self.i + k
        return self.tokens[j] if j < len(self.tokens) else None

    def at(self, kind: str, k: int = 0) -> bool:
        tok = self.peek(k)
        return tok is not None and tok.kind == kind

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def _end_pos(self) -> tuple[int, int]:
        if self.tokens:
            last = self.tokens[-1]
            return last.line, last.col
        return 1, 1

    def expect(self, kind: str, what: str = "") -> Token:
        tok = self.peek()
        if tok is None or tok.kind != kind:
            self.fail(f"expected {what or kind}", tok)
        return self.advance()

    def fail(self, message: str, tok: Optional[Token]):
        if tok is None:
            line, col = self._end_pos()
            raise ParseError(f"{message}, found end of line", line, col)
        raise ParseError(f"{message}, found {tok.text!r}", tok.line, tok.col)

    # grammar
    def expr(self) -> Expr:
        node = self.term()
        while self.at("plus") or self.at("minus"):
            tok = self.advance()
            node = Binary(tok.text, node, self.term(), pos=(tok.line, tok.col))
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.at("star") or self.at("slash"):
            tok = self.advance()
            node = Binary(tok.text, node, self.factor(), pos=(tok.line, tok.col))
        return node

    def factor(self) -> Expr:
        if self.at("minus"):
            tok = self.advance()
            nxt = self.peek()
            # fold "-<number>" into a literal unless it is a power base
            if nxt is not None and nxt.kind in ("int", "real") and not self.at("caret", 1):
                self.advance()
                return Const(-float(nxt.text), pos=(tok.line, tok.col))
            return Unary("neg", self.factor(), pos=(tok.line, tok.col))
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.at("caret"):
            tok = self.advance()
            return Binary("^", base, self.factor(), pos=(tok.line, tok.col))
        return base

    def atom(self) -> Expr:
        tok = self.peek()
        if tok is None:
            self.fail("expected an expression", None)
        if tok.kind in ("int", "real"):
            self.advance()
            return Const(float(tok.text), pos=(tok.line, tok.col))
        if tok.kind == "lparen":
            self.advance()
            node = self.expr()
            self._close(tok)
            return node
        if tok.kind == "ident":
            self.advance()
            if tok.text in ("ln", "exp"):
                open_ = self.expect("lparen", f"'(' after {tok.text}")
                arg = self.expr()
                self._close(open_)
                return Unary(tok.text, arg, pos=(tok.line, tok.col))
            if self.at("lparen"):
                return self._var_ref(tok)
            if tok.text == "t":
                return Time(pos=(tok.line, tok.col))
            return Param(tok.text, pos=(tok.line, tok.col))
        self.fail("expected an expression", tok)

    def _close(self, open_tok: Token):
        tok = self.peek()
        if tok is None or tok.kind != "rparen":
            if tok is None or tok.kind == "newline":
                raise ParseError("unbalanced parenthesis", open_tok.line, open_tok.col)
            self.fail("expected ')'", tok)
        self.advance()

    def _var_ref(self, name_tok: Token) -> Var:
        open_ = self.advance()
        if not self.allow_vars:
            raise SemanticError(
                "variables are not allowed here", name_tok.line, name_tok.col
            )
        if name_tok.text not in self.var_names:
            raise SemanticError(
                f"undeclared variable {name_tok.text!r}", name_tok.line, name_tok.col
            )
        t_tok = self.peek()
        if t_tok is None or t_tok.kind != "ident" or t_tok.text != "t":
            self.fail("expected 't' in variable reference", t_tok)
        self.advance()
        lag = 0
        if self.at("plus"):
            self.advance()
            lag = int(self.expect("int", "integer lag").text)
        self._close(open_)
        return Var(self.var_names.index(name_tok.text), lag, pos=(name_tok.line, name_tok.col))


def parse_expr(source: str, var_names=("c",), allow_vars: bool = True) -> Expr:
    """Parse a single expression (no semantic checks on parameter names)."""
    tokens = [tok for tok in tokenize(source) if tok.kind != "newline"]
    p = _Parser(tokens, tuple(var_names), allow_vars)
    node = p.expr()
    if p.peek() is not None:
        p.fail("unexpected trailing input", p.peek())
    return node


def _split_lines(tokens: list[Token]) -> list[list[Token]]:
    lines, cur = [], []
    for tok in tokens:
        if tok.kind == "newline":
            if cur:
                lines.append(cur)
            cur = []
        else:
            cur.append(tok)
    if cur:
        lines.append(cur)
    return lines


def _signed_number(p: _Parser, what: str) -> float:
    sign = 1.0
    if p.at("minus"):
        p.advance()
        sign = -1.0
    tok = p.peek()
    if tok is None or tok.kind not in ("int", "real"):
        p.fail(f"expected {what}", tok)
    p.advance()
    return sign * float(tok.text)


def _keyword_args(p: _Parser, allowed: dict) -> dict:
    """Parse ``(k=v, k=v)`` where ``allowed`` maps names to 'int' or 'real'."""
    open_ = p.expect("lparen", "'('")
    out = {}
    while not p.at("rparen"):
        key = p.expect("ident", "argument name")
        if key.text not in allowed:
            raise SemanticError(f"unknown argument {key.text!r}", key.line, key.col)
        p.expect("equals", "'='")
        if allowed[key.text] == "int":
            out[key.text] = int(p.expect("int", "integer").text)
        else:
            out[key.text] = _signed_number(p, "number")
        if p.at("comma"):
            p.advance()
        elif not p.at("rparen"):
            if p.peek() is None:
                raise ParseError("unbalanced parenthesis", open_.line, open_.col)
            p.fail("expected ',' or ')'", p.peek())
    p.advance()
    missing = set(allowed) - set(out)
    if missing:
        raise SemanticError(
            f"missing argument(s) {', '.join(sorted(missing))}", open_.line, open_.col
        )
    return out


def _check_params(expr: Expr, params: dict):
    for node in iter_nodes(expr):
        if isinstance(node, Param) and node.name not in params:
            line, col = node.pos or (0, 0)
            raise SemanticError(f"undeclared parameter {node.name!r}", line, col)


def parse_problem(source: str) -> ProblemSpec:
    """Parse and validate a problem file.

    The order N is inferred as one plus the largest lag in the utility; an
    ``order`` header, when present, must agree with it.
    """
    lines = _split_lines(tokenize(source))
    header_order: Optional[Token] = None
    var_names: Optional[tuple] = None
    params: dict = {}
    utility_line = None
    init_lines, perturb_lines = [], []

    for line in lines:
        head = line[0]
        if head.kind != "ident":
            raise ParseError(f"expected a keyword, found {head.text!r}", head.line, head.col)
        kw = head.text
        p = _Parser(line, ())
        p.advance()
        if kw == "order":
            n_tok = p.expect("ident", "'N'")
            if n_tok.text != "N":
                p.i -= 1
                p.fail("expected 'N'", n_tok)
            p.expect("equals", "'='")
            header_order = p.expect("int", "integer order")
            if int(header_order.text) < 1:
                raise SemanticError("order must be >= 1", header_order.line, header_order.col)
        elif kw == "vars":
            if var_names is not None:
                raise SemanticError("duplicate 'vars' line", head.line, head.col)
            names = [p.expect("ident", "variable name")]
            while p.at("comma"):
                p.advance()
                names.append(p.expect("ident", "variable name"))
            seen = set()
            for tok in names:
                if tok.text in RESERVED or tok.text in seen:
                    raise SemanticError(f"invalid variable name {tok.text!r}", tok.line, tok.col)
                seen.add(tok.text)
            var_names = tuple(tok.text for tok in names)
        elif kw == "params":
            while p.peek() is not None:
                name = p.expect("ident", "parameter name")
                if name.text in RESERVED:
                    raise SemanticError(f"reserved name {name.text!r}", name.line, name.col)
                if name.text in params:
                    raise SemanticError(f"duplicate parameter {name.text!r}", name.line, name.col)
                p.expect("equals", "'='")
                params[name.text] = _signed_number(p, "parameter value")
                if p.at("comma"):
                    p.advance()
        elif kw == "utility":
            if utility_line is not None:
                raise SemanticError("duplicate 'utility' line", head.line, head.col)
            utility_line = line
        elif kw == "init":
            init_lines.append(line)
        elif kw == "perturb":
            perturb_lines.append(line)
        else:
            raise ParseError(f"unknown keyword {kw!r}", head.line, head.col)
        if kw in ("order", "vars", "params") and p.peek() is not None:
            p.fail("unexpected trailing input", p.peek())

    if var_names is None:
        var_names = ("c",)
    clash = set(var_names) & set(params)
    if clash:
        raise SemanticError(f"name used as both variable and parameter: {sorted(clash)}")
    if utility_line is None:
        raise SemanticError("missing 'utility' line")

    p = _Parser(utility_line, var_names)
    p.advance()
    u_tok = p.expect("ident", "'U'")
    if u_tok.text != "U":
        p.i -= 1
        p.fail("expected 'U'", u_tok)
    p.expect("equals", "'='")
    utility = p.expr()
    if p.peek() is not None:
        p.fail("unexpected trailing input", p.peek())
    _check_params(utility, params)

    order = max_lag(utility) + 1 if max_lag(utility) >= 0 else 1
    if header_order is not None:
        declared = int(header_order.text)
        for node in iter_nodes(utility):
            if isinstance(node, Var) and node.lag > declared - 1:
                line, col = node.pos
                raise SemanticError(
                    f"lag t+{node.lag} out of range for order N = {declared}", line, col
                )
        if declared != order:
            raise SemanticError(
                f"declared order {declared} but the utility implies N = {order}",
                header_order.line,
                header_order.col,
            )

    pins = []
    seen_pins = set()
    for line in init_lines:
        p = _Parser(line, var_names)
        p.advance()
        while p.peek() is not None:
            name = p.expect("ident", "variable name")
            if name.text not in var_names:
                raise SemanticError(f"undeclared variable {name.text!r}", name.line, name.col)
            open_ = p.expect("lparen", "'('")
            t_tok = p.expect("int", "integer time")
            p._close(open_)
            p.expect("equals", "'='")
            value = _signed_number(p, "initial value")
            t = int(t_tok.text)
            if t > order - 2:
                raise SemanticError(
                    f"pinned time {t} must lie in [0, N-2] = [0, {order - 2}]",
                    t_tok.line,
                    t_tok.col,
                )
            key = (t, var_names.index(name.text))
            if key in seen_pins:
                raise SemanticError("duplicate initial condition", name.line, name.col)
            seen_pins.add(key)
            pins.append((t, key[1], value))
            if p.at("comma"):
                p.advance()
    pins.sort()

    perturbations = {}
    for line in perturb_lines:
        p = _Parser(line, var_names, allow_vars=False)
        p.advance()
        name = p.expect("ident", "perturbation name")
        if name.text in perturbations:
            raise SemanticError(f"duplicate perturbation {name.text!r}", name.line, name.col)
        p.expect("equals", "'='")
        kind = p.expect("ident", "perturbation kind")
        if kind.text == "step":
            args = _keyword_args(p, {"t0": "int", "level": "real"})
            if args["t0"] < 1:
                raise SemanticError("step perturbation needs t0 >= 1", kind.line, kind.col)
            pert = PerturbationSpec("step", t0=args["t0"], level=args["level"])
        elif kind.text == "scaled":
            args = _keyword_args(p, {"alpha": "real"})
            if not 0.0 < args["alpha"] < 1.0:
                raise SemanticError("scaled perturbation needs 0 < alpha < 1", kind.line, kind.col)
            pert = PerturbationSpec("scaled", alpha=args["alpha"])
        elif kind.text == "expr":
            open_ = p.expect("lparen", "'('")
            exprs = [p.expr()]
            while p.at("comma"):
                p.advance()
                exprs.append(p.expr())
            p._close(open_)
            if len(exprs) not in (1, len(var_names)):
                raise SemanticError(
                    f"expected 1 or {len(var_names)} expressions", kind.line, kind.col
                )
            for e in exprs:
                _check_params(e, params)
            pert = PerturbationSpec("expr", exprs=tuple(exprs))
        else:
            raise ParseError(f"unknown perturbation kind {kind.text!r}", kind.line, kind.col)
        if p.peek() is not None:
            p.fail("unexpected trailing input", p.peek())
        perturbations[name.text] = pert

    return ProblemSpec(
        order=order,
        dim=len(var_names),
        var_names=var_names,
        params=params,
        utility=utility,
        pinned_initial=tuple(pins),
        perturbations=perturbations,
    )


# --------------------------------------------------------------------------
# Printer

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}
_ATOM = 5


def _fmt_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return "-0" if v == 0 and math.copysign(1.0, v) < 0 else str(int(v))
    return repr(v)


def _prec(node: Expr) -> int:
    if isinstance(node, Binary):
        return _PREC[node.op]
    if isinstance(node, Unary) and node.op == "neg":
        return _PREC["neg"]
    if isinstance(node, Const) and (node.value < 0 or str(node.value).startswith("-")):
        return _PREC["neg"]
    return _ATOM


def format_expr(expr: Expr, var_names=("c",)) -> str:
    """Render ``expr`` so that :func:`parse_expr` rebuilds an equal tree."""

    def wrap(node: Expr, min_prec: int) -> str:
        s = go(node)
        return f"({s})" if _prec(node) < min_prec else s

    def go(node: Expr) -> str:
        if isinstance(node, Const):
            return _fmt_number(node.value)
        if isinstance(node, Param):
            return node.name
        if isinstance(node, Time):
            return "t"
        if isinstance(node, Var):
            name = var_names[node.comp]
            return f"{name}(t)" if node.lag == 0 else f"{name}(t+{node.lag})"
        if isinstance(node, Unary):
            if node.op == "neg":
                inner = go(node.operand)
                op = node.operand
                plain = (
                    isinstance(op, (Param, Time, Var))
                    or (isinstance(op, Unary) and op.op != "neg")
                    or (isinstance(op, Binary) and op.op == "^")
                )
                return f"-{inner}" if plain else f"-({inner})"
            return f"{node.op}({go(node.operand)})"
        if isinstance(node, Binary):
            if node.op == "^":
                return f"{wrap(node.left, _ATOM)}^{wrap(node.right, _PREC['neg'])}"
            p = _PREC[node.op]
            sep = f" {node.op} " if p == 1 else node.op
            return f"{wrap(node.left, p)}{sep}{wrap(node.right, p + 1)}"
        raise TypeError(f"not an expression node: {node!r}")

    return go(expr)


def print_canonical(spec: ProblemSpec) -> str:
    names = spec.var_names
    out = [f"order N = {spec.order}", "vars " + ", ".join(names)]
    if spec.params:
        out.append("params " + " ".join(f"{k}={v!r}" for k, v in spec.params.items()))
    out.append("utility U = " + format_expr(spec.utility, names))
    if spec.pinned_initial:
        out.append(
            "init " + " ".join(f"{names[i]}({t})={v!r}" for t, i, v in spec.pinned_initial)
        )
    for name, q in spec.perturbations.items():
        if q.kind == "step":
            body = f"step(t0={q.t0}, level={q.level!r})"
        elif q.kind == "scaled":
            body = f"scaled(alpha={q.alpha!r})"
        else:
            body = "expr(" + ", ".join(format_expr(e, names) for e in q.exprs) + ")"
        out.append(f"perturb {name} = {body}")
    return "\n".join(out) + "\n"
