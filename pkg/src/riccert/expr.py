"""Scalar functions of ``t`` as immutable expression trees.

Grammar (EBNF)::

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = "-" unary | power ;
    power   = atom [ "^" unary ] ;             (* right associative *)
    atom    = number | "t" | "pi" | func "(" expr ")" | "(" expr ")" ;
    func    = "exp" | "log" | "sin" | "cos" | "sqrt" | "abs" ;
    number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ]
            | "." digits [ exponent ] ;

A minus sign directly in front of a number literal that is not itself raised
to a power is folded into a negative constant, so ``-2*t`` parses to
``Const(-2) * t`` while ``-2^2`` stays ``-(2^2)``.

Trees are evaluated either on a float (using :mod:`math`) or on a numpy array.
Both paths raise :class:`DomainError` instead of returning nan/inf for
division by zero, log of a non-positive number, sqrt of a negative number,
``0`` to a negative power and a non-positive base under a non-literal
exponent.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, NonDifferentiableError, ParseError, UnknownIdentifierError

__all__ = [
    "Expr", "Const", "Var", "Neg", "Func", "BinOp", "T",
    "parse", "evaluate", "differentiate", "to_string", "as_expr", "FUNCTIONS",
]

FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt", "abs")

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5
_BINOP_PREC = {"+": _PREC_ADD, "-": _PREC_ADD, "*": _PREC_MUL, "/": _PREC_MUL, "^": _PREC_POW}


class Expr:
    """Base node. Subclasses are frozen dataclasses, hence hashable and comparable."""

    __array_priority__ = 100  # keep numpy scalars from hijacking the operators

    def __call__(self, t):
        return evaluate(self, t)

    def __str__(self):
        return to_string(self)

    def __add__(self, other):
        return BinOp("+", self, as_expr(other))

    def __radd__(self, other):
        return BinOp("+", as_expr(other), self)

    def __sub__(self, other):
        return BinOp("-", self, as_expr(other))

    def __rsub__(self, other):
        return BinOp("-", as_expr(other), self)

    def __mul__(self, other):
        return BinOp("*", self, as_expr(other))

    def __rmul__(self, other):
        return BinOp("*", as_expr(other), self)

    def __truediv__(self, other):
        return BinOp("/", self, as_expr(other))

    def __rtruediv__(self, other):
        return BinOp("/", as_expr(other), self)

    def __pow__(self, other):
        return BinOp("^", self, as_expr(other))

    def __rpow__(self, other):
        return BinOp("^", as_expr(other), self)

    def __neg__(self):
        return Neg(self)

    @cached_property
    def _scalar_fn(self):
        return _compile_scalar(self)

    @cached_property
    def _array_fn(self):
        return _compile_array(self)

    def contains_abs(self) -> bool:
        return any(isinstance(n, Func) and n.name == "abs" for n in self.walk())

    def walk(self):
        yield self
        for child in self.children():
            yield from child.walk()

    def children(self):
        return ()

    @property
    def is_constant(self) -> bool:
        return not any(isinstance(n, Var) for n in self.walk())


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))

    @property
    def is_integer(self) -> bool:
        return math.isfinite(self.value) and self.value.is_integer()


@dataclass(frozen=True, eq=True)
class Var(Expr):
    name: str = "t"


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr

    def children(self):
        return (self.arg,)


@dataclass(frozen=True, eq=True)
class Func(Expr):
    name: str
    arg: Expr

    def __post_init__(self):
        if self.name not in FUNCTIONS:
            raise ValueError(f"unknown function {self.name!r}")

    def children(self):
        return (self.arg,)


@dataclass(frozen=True, eq=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op not in _BINOP_PREC:
            raise ValueError(f"unknown operator {self.op!r}")

    def children(self):
        return (self.left, self.right)


T = Var()


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return parse(value)
    if isinstance(value, (int, float, np.integer, np.floating)):
        return Const(float(value))
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


@dataclass(frozen=True)
class _Token:
    kind: str  # num | name | op | end
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    raw = text.encode("utf-8")
    # work on the decoded string but report byte offsets
    def byte_offset(i):
        return len(text[:i].encode("utf-8"))

    while pos < len(text):
        if text[pos:].strip() == "":
            pos = len(text)
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            stripped = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[stripped]!r}", byte_offset(stripped))
        kind = m.lastgroup
        tokens.append(_Token(kind, m.group(kind), byte_offset(m.start(kind))))
        pos = m.end()
    tokens.append(_Token("end", "", len(raw)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self, k=0):
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        tok = self.peek()
        if tok.kind != "op" or tok.text != op:
            found = "end of input" if tok.kind == "end" else repr(tok.text)
            raise ParseError(f"expected {op!r}, found {found}", tok.offset)
        return self.take()

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"unexpected {tok.text!r}", tok.offset)
        return node

    def expr(self):
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.take().text
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.take().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            nxt, after = self.peek(1), self.peek(2)
            if nxt.kind == "num" and not (after.kind == "op" and after.text == "^"):
                self.take()
                self.take()
                return Const(-float(nxt.text))
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        tok = self.peek()
        if tok.kind == "num":
            self.take()
            return Const(float(tok.text))
        if tok.kind == "name":
            self.take()
            if tok.text == "t":
                return T
            if tok.text == "pi":
                return Const(math.pi)
            if tok.text in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Func(tok.text, arg)
            raise UnknownIdentifierError(tok.text, tok.offset)
        if tok.kind == "op" and tok.text == "(":
            self.take()
            node = self.expr()
            self.expect_op(")")
            return node
        found = "end of input" if tok.kind == "end" else repr(tok.text)
        raise ParseError(f"unexpected {found}", tok.offset)


def parse(text: str) -> Expr:
    """Parse a formula in ``t``; raises :class:`ParseError` with a byte offset."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# printing

def _prec(node: Expr) -> int:
    if isinstance(node, BinOp):
        return _BINOP_PREC[node.op]
    if isinstance(node, Neg):
        return _PREC_NEG
    return _PREC_ATOM


def _fmt_number(x: float) -> str:
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def to_string(node: Expr) -> str:
    if isinstance(node, Const):
        if math.copysign(1.0, node.value) < 0:
            return f"(-{_fmt_number(-node.value)})"
        return _fmt_number(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Func):
        return f"{node.name}({to_string(node.arg)})"
    if isinstance(node, Neg):
        inner = to_string(node.arg)
        # a bare literal after "-" would be folded into a constant on re-parse
        if _prec(node.arg) < _PREC_NEG or (isinstance(node.arg, Const) and node.arg.value >= 0):
            inner = f"({inner})"
        return f"-{inner}"
    op, p = node.op, _BINOP_PREC[node.op]
    left, right = to_string(node.left), to_string(node.right)
    if op == "^":
        if _prec(node.left) <= _PREC_POW:
            left = f"({left})"
        if _prec(node.right) < _PREC_NEG:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {op} {right}"


# ---------------------------------------------------------------------------
# evaluation

def _literal_int_exponent(node: BinOp):
    if isinstance(node.right, Const) and node.right.is_integer:
        return int(node.right.value)
    return None


def _compile_scalar(node: Expr):
    if isinstance(node, Const):
        v = node.value
        return lambda t: v
    if isinstance(node, Var):
        return lambda t: float(t)
    if isinstance(node, Neg):
        f = node.arg._scalar_fn
        return lambda t: -f(t)
    if isinstance(node, Func):
        f = node.arg._scalar_fn
        name = node.name
        if name == "exp":
            def fn(t):
                try:
                    return math.exp(f(t))
                except OverflowError:
                    raise DomainError("exp overflow", node, t) from None
            return fn
        if name == "log":
            def fn(t):
                x = f(t)
                if x <= 0.0:
                    raise DomainError("log of non-positive value", node, t)
                return math.log(x)
            return fn
        if name == "sqrt":
            def fn(t):
                x = f(t)
                if x < 0.0:
                    raise DomainError("sqrt of negative value", node, t)
                return math.sqrt(x)
            return fn
        return {"sin": lambda t: math.sin(f(t)), "cos": lambda t: math.cos(f(t)),
                "abs": lambda t: abs(f(t))}[name]
    f, g = node.left._scalar_fn, node.right._scalar_fn
    op = node.op
    if op == "+":
        return lambda t: f(t) + g(t)
    if op == "-":
        return lambda t: f(t) - g(t)
    if op == "*":
        return lambda t: f(t) * g(t)
    if op == "/":
        def fn(t):
            den = g(t)
            if den == 0.0:
                raise DomainError("division by zero", node, t)
            return f(t) / den
        return fn
    n = _literal_int_exponent(node)
    if n is not None:
        def fn(t):
            base = f(t)
            if base == 0.0 and n < 0:
                raise DomainError("zero to a negative power", node, t)
            try:
                return base ** n
            except OverflowError:
                raise DomainError("power overflow", node, t) from None
        return fn

    def fn(t):
        base = f(t)
        if base <= 0.0:
            raise DomainError("non-positive base with non-integer exponent", node, t)
        try:
            return base ** g(t)
        except OverflowError:
            raise DomainError("power overflow", node, t) from None
    return fn


def _first_bad(t, mask):
    idx = int(np.flatnonzero(mask)[0])
    return float(np.broadcast_to(t, mask.shape)[idx])


def _compile_array(node: Expr):
    if isinstance(node, Const):
        v = node.value
        return lambda t: np.full(np.shape(t), v)
    if isinstance(node, Var):
        return lambda t: np.asarray(t, dtype=float)
    if isinstance(node, Neg):
        f = node.arg._array_fn
        return lambda t: -f(t)
    if isinstance(node, Func):
        f = node.arg._array_fn
        name = node.name
        if name in ("log", "sqrt"):
            def fn(t):
                x = f(t)
                bad = x <= 0.0 if name == "log" else x < 0.0
                if np.any(bad):
                    raise DomainError(f"{name} outside its domain", node, _first_bad(t, bad))
                return np.log(x) if name == "log" else np.sqrt(x)
            return fn
        if name == "exp":
            def fn(t):
                with np.errstate(over="ignore"):
                    out = np.exp(f(t))
                if not np.all(np.isfinite(out)):
                    raise DomainError("exp overflow", node, _first_bad(t, ~np.isfinite(out)))
                return out
            return fn
        ufunc = {"sin": np.sin, "cos": np.cos, "abs": np.abs}[name]
        return lambda t: ufunc(f(t))
    f, g = node.left._array_fn, node.right._array_fn
    op = node.op
    if op == "+":
        return lambda t: f(t) + g(t)
    if op == "-":
        return lambda t: f(t) - g(t)
    if op == "*":
        return lambda t: f(t) * g(t)
    if op == "/":
        def fn(t):
            den = g(t)
            bad = den == 0.0
            if np.any(bad):
                raise DomainError("division by zero", node, _first_bad(t, bad))
            return f(t) / den
        return fn
    n = _literal_int_exponent(node)

    def fn(t):
        base = f(t)
        if n is not None:
            bad = (base == 0.0) & (n < 0)
            if np.any(bad):
                raise DomainError("zero to a negative power", node, _first_bad(t, bad))
            with np.errstate(over="ignore"):
                out = base ** float(n)
        else:
            bad = base <= 0.0
            if np.any(bad):
                raise DomainError("non-positive base with non-integer exponent", node,
                                  _first_bad(t, bad))
            with np.errstate(over="ignore"):
                out = base ** g(t)
        if not np.all(np.isfinite(out)):
            raise DomainError("power overflow", node, _first_bad(t, ~np.isfinite(out)))
        return out
    return fn


def evaluate(e: Expr, t):
    """Value of ``e`` at ``t``; ``t`` may be a float or an array."""
    if np.ndim(t) == 0:
        return e._scalar_fn(float(t))
    return e._array_fn(np.asarray(t, dtype=float))


# ---------------------------------------------------------------------------
# differentiation

_ZERO, _ONE = Const(0.0), Const(1.0)


def _is(node, value):
    return isinstance(node, Const) and node.value == value


def _fold(node):
    try:
        return Const(node._scalar_fn(0.0))
    except DomainError:
        return node


def _add(a, b):
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return BinOp("+", a, b)


def _sub(a, b):
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return _neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return BinOp("-", a, b)


def _neg(a):
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a, b):
    if _is(a, 0.0) or _is(b, 0.0):
        return _ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return BinOp("*", a, b)


def _div(a, b):
    if _is(b, 1.0):
        return a
    if _is(a, 0.0) and not _is(b, 0.0):
        return _ZERO
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(BinOp("/", a, b))
    return BinOp("/", a, b)


def _pow(a, b):
    if _is(b, 1.0):
        return a
    if _is(b, 0.0):
        return _ONE
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(BinOp("^", a, b))
    return BinOp("^", a, b)


def differentiate(e: Expr) -> Expr:
    """Symbolic d/dt. Raises :class:`NonDifferentiableError` on ``abs``."""
    if isinstance(e, Const):
        return _ZERO
    if isinstance(e, Var):
        return _ONE
    if isinstance(e, Neg):
        return _neg(differentiate(e.arg))
    if isinstance(e, Func):
        u = e.arg
        du = differentiate(u) if e.name != "abs" else None
        if e.name == "abs":
            raise NonDifferentiableError(e)
        if e.name == "exp":
            return _mul(e, du)
        if e.name == "log":
            return _div(du, u)
        if e.name == "sin":
            return _mul(Func("cos", u), du)
        if e.name == "cos":
            return _neg(_mul(Func("sin", u), du))
        return _div(du, _mul(Const(2.0), e))  # sqrt
    u, v = e.left, e.right
    du, dv = differentiate(u), differentiate(v)
    if e.op == "+":
        return _add(du, dv)
    if e.op == "-":
        return _sub(du, dv)
    if e.op == "*":
        return _add(_mul(du, v), _mul(u, dv))
    if e.op == "/":
        return _div(_sub(_mul(du, v), _mul(u, dv)), _pow(v, Const(2.0)))
    if isinstance(v, Const):
        n = v.value
        return _mul(_mul(Const(n), _pow(u, Const(n - 1.0))), du)
    # general power u^v = exp(v log u), base > 0 by the domain rule
    return _mul(e, _add(_mul(dv, Func("log", u)), _div(_mul(v, du), u)))
