"""Expression language for scalar functions on R^n.

Grammar (whitespace ignored)::

    expr    := term (('+' | '-') term)*
    term    := '-' term | product
    product := factor (('*' | '/') factor)*
    factor  := '-' factor | atom ('^' ['-'] INT)?
    atom    := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'

NAME is ``x1 .. xn``; for n <= 3 the aliases ``x, y, z`` stand for x1, x2, x3.
FUNC is one of ``sin``, ``cos``, ``exp``. Exponents are integers. A leading
minus applies to the whole product that follows it, so ``-y/2`` is
``Neg(Div(y, 2))``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

FUNCTIONS = ("sin", "cos", "exp")
ALIASES = {"x": 1, "y": 2, "z": 3}


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, offset: int, source: str = ""):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.source = source


class UnknownIdentifierError(ExprSyntaxError):
    pass


class VariableIndexError(ValueError):
    pass


class EvaluationError(ArithmeticError):
    """Raised when an expression evaluates to a non-finite value."""


# --- AST -------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Add:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Sub:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Mul:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Div:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Func:
    name: str
    arg: "Expr"


Expr = Union[Const, Var, Neg, Add, Sub, Mul, Div, Pow, Func]
_BINARY = (Add, Sub, Mul, Div)

ZERO = Const(0.0)
ONE = Const(1.0)


# --- parsing ----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(src[pos:]) - len(src[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {src[bad]!r}", bad, src)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src: str, n: int | None):
        self.src = src
        self.n = n
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op: str):
        kind, text, off = self.take()
        if kind != "op" or text != op:
            what = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {op!r}, found {what}", off, self.src)

    def at(self, op: str) -> bool:
        kind, text, _ = self.peek()
        return kind == "op" and text == op

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {text!r}", off, self.src)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.at("+") or self.at("-"):
            op = self.take()[1]
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self) -> Expr:
        if self.at("-"):
            self.take()
            return Neg(self.term())
        return self.product()

    def product(self) -> Expr:
        e = self.factor()
        while self.at("*") or self.at("/"):
            op = self.take()[1]
            rhs = self.factor()
            e = Mul(e, rhs) if op == "*" else Div(e, rhs)
        return e

    def factor(self) -> Expr:
        if self.at("-"):
            self.take()
            return Neg(self.factor())
        base = self.atom()
        if self.at("^"):
            self.take()
            sign = 1
            if self.at("-"):
                self.take()
                sign = -1
            kind, text, off = self.take()
            if kind != "num" or not re.fullmatch(r"\d+", text):
                what = "end of input" if kind == "end" else repr(text)
                raise ExprSyntaxError(f"expected integer exponent, found {what}", off, self.src)
            return Pow(base, sign * int(text))
        return base

    def atom(self) -> Expr:
        kind, text, off = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(text, arg)
            index = _variable_index(text)
            if index is None:
                raise UnknownIdentifierError(f"unknown identifier {text!r}", off, self.src)
            if text in ALIASES and self.n is not None and self.n > 3:
                raise UnknownIdentifierError(
                    f"alias {text!r} is only available for n <= 3", off, self.src
                )
            if self.n is not None and index > self.n:
                raise VariableIndexError(f"variable {text!r} exceeds dimension n={self.n}")
            return Var(index)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        what = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"unexpected {what}", off, self.src)


def _variable_index(name: str) -> int | None:
    if name in ALIASES:
        return ALIASES[name]
    m = re.fullmatch(r"x([1-9]\d*)", name)
    return int(m.group(1)) if m else None


def parse_expr(src: str, n: int | None = None) -> Expr:
    """Parse expression text. With ``n`` given, variable indices are bound and checked."""
    return _Parser(src, n).parse()


def max_index(e: Expr) -> int:
    if isinstance(e, Var):
        return e.index
    if isinstance(e, Const):
        return 0
    return max((max_index(c) for c in children(e)), default=0)


def bind(e: Expr, n: int) -> Expr:
    """Check that every variable index is within 1..n."""
    m = max_index(e)
    if m > n:
        raise VariableIndexError(f"expression uses x{m} but n={n}")
    return e


def children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, (Const, Var)):
        return ()
    if isinstance(e, (Neg, Func)):
        return (e.arg,)
    if isinstance(e, Pow):
        return (e.base,)
    return (e.left, e.right)


# --- printing ---------------------------------------------------------------

_PREC = {Add: 1, Sub: 1, Neg: 2, Mul: 3, Div: 3, Pow: 4}


def _prec(e: Expr) -> int:
    return _PREC.get(type(e), 5)


def _fmt_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_text(e: Expr, n: int | None = None) -> str:
    """Canonical text; ``parse_expr(to_text(e)) == e`` for trees with nonnegative constants."""
    use_alias = n is not None and n <= 3

    def wrap(sub: Expr, ok: bool) -> str:
        s = fmt(sub)
        return s if ok else f"({s})"

    def fmt(e: Expr) -> str:
        if isinstance(e, Const):
            s = _fmt_number(abs(e.value))
            return s if e.value >= 0 else f"(-{s})"
        if isinstance(e, Var):
            return "xyz"[e.index - 1] if use_alias and e.index <= 3 else f"x{e.index}"
        if isinstance(e, Neg):
            return "-" + wrap(e.arg, _prec(e.arg) >= 2)
        if isinstance(e, Func):
            return f"{e.name}({fmt(e.arg)})"
        if isinstance(e, Pow):
            return wrap(e.base, _prec(e.base) == 5) + f"^{e.exponent}"
        op = {Add: " + ", Sub: " - ", Mul: "*", Div: "/"}[type(e)]
        if _prec(e) == 1:
            return fmt(e.left) + op + wrap(e.right, _prec(e.right) >= 2)
        left_ok = _prec(e.left) >= 3 and not isinstance(e.left, Neg)
        return wrap(e.left, left_ok) + op + wrap(e.right, _prec(e.right) >= 4)

    return fmt(e)


# --- evaluation -------------------------------------------------------------


def evaluate(e: Expr, x) -> np.ndarray | float:
    """Evaluate at a point of shape (n,) or a batch of shape (N, n).

    Raises EvaluationError when a value is not finite.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    with np.errstate(all="ignore"):
        val = np.broadcast_to(_eval(e, pts), pts.shape[:1])
    if not np.all(np.isfinite(val)):
        raise EvaluationError(f"non-finite value evaluating {to_text(e)}")
    return float(val[0]) if single else np.array(val)


def _eval(e: Expr, pts: np.ndarray):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        if e.index > pts.shape[1]:
            raise VariableIndexError(f"x{e.index} evaluated on points of dimension {pts.shape[1]}")
        return pts[:, e.index - 1]
    if isinstance(e, Neg):
        return -_eval(e.arg, pts)
    if isinstance(e, Add):
        return _eval(e.left, pts) + _eval(e.right, pts)
    if isinstance(e, Sub):
        return _eval(e.left, pts) - _eval(e.right, pts)
    if isinstance(e, Mul):
        return _eval(e.left, pts) * _eval(e.right, pts)
    if isinstance(e, Div):
        return np.divide(_eval(e.left, pts), _eval(e.right, pts))
    if isinstance(e, Pow):
        b = np.asarray(_eval(e.base, pts), dtype=float)
        if e.exponent < 0:
            return 1.0 / b ** (-e.exponent)
        return b ** e.exponent
    if isinstance(e, Func):
        return getattr(np, e.name)(_eval(e.arg, pts))
    raise TypeError(f"not an expression node: {e!r}")


# --- simplification and differentiation -------------------------------------


def const_value(e: Expr) -> float | None:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Neg) and isinstance(e.arg, Const):
        return -e.arg.value
    return None


def number(v: float) -> Expr:
    """Canonical constant: negative values become Neg(Const)."""
    v = float(v)
    if v < 0:
        return Neg(Const(-v))
    return Const(v + 0.0)


def neg(a: Expr) -> Expr:
    c = const_value(a)
    if c is not None:
        return number(-c)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def add(a: Expr, b: Expr) -> Expr:
    ca, cb = const_value(a), const_value(b)
    if ca is not None and cb is not None:
        return number(ca + cb)
    if ca == 0.0:
        return b
    if cb == 0.0:
        return a
    if isinstance(b, Neg):
        return Sub(a, b.arg)
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    ca, cb = const_value(a), const_value(b)
    if ca is not None and cb is not None:
        return number(ca - cb)
    if cb == 0.0:
        return a
    if ca == 0.0:
        return neg(b)
    if a == b:
        return ZERO
    if isinstance(b, Neg):
        return Add(a, b.arg)
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    ca, cb = const_value(a), const_value(b)
    if ca is not None and cb is not None:
        return number(ca * cb)
    if ca == 0.0 or cb == 0.0:
        return ZERO
    if ca == 1.0:
        return b
    if cb == 1.0:
        return a
    if ca == -1.0:
        return neg(b)
    if cb == -1.0:
        return neg(a)
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    ca, cb = const_value(a), const_value(b)
    if cb == 0.0:
        return Div(a, b)
    if ca is not None and cb is not None:
        return number(ca / cb)
    if ca == 0.0:
        return ZERO
    if cb == 1.0:
        return a
    if cb == -1.0:
        return neg(a)
    return Div(a, b)


def power(b: Expr, k: int) -> Expr:
    cb = const_value(b)
    if k == 0:
        return ONE
    if k == 1:
        return b
    if cb is not None and (cb != 0.0 or k > 0):
        return number(cb ** k)
    return Pow(b, k)


def func(name: str, a: Expr) -> Expr:
    c = const_value(a)
    if c is not None:
        return number(getattr(math, name)(c))
    return Func(name, a)


def simplify(e: Expr) -> Expr:
    """Constant folding and 0/1 identities, bottom-up."""
    if isinstance(e, Const):
        return number(e.value)
    if isinstance(e, Var):
        return e
    if isinstance(e, Neg):
        return neg(simplify(e.arg))
    if isinstance(e, Pow):
        return power(simplify(e.base), e.exponent)
    if isinstance(e, Func):
        return func(e.name, simplify(e.arg))
    builder = {Add: add, Sub: sub, Mul: mul, Div: div}[type(e)]
    return builder(simplify(e.left), simplify(e.right))


def diff_expr(e: Expr, i: int) -> Expr:
    """Exact partial derivative with respect to x_i, simplified."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == i else ZERO
    if isinstance(e, Neg):
        return neg(diff_expr(e.arg, i))
    if isinstance(e, Add):
        return add(diff_expr(e.left, i), diff_expr(e.right, i))
    if isinstance(e, Sub):
        return sub(diff_expr(e.left, i), diff_expr(e.right, i))
    if isinstance(e, Mul):
        return add(mul(diff_expr(e.left, i), e.right), mul(e.left, diff_expr(e.right, i)))
    if isinstance(e, Div):
        da, db = diff_expr(e.left, i), diff_expr(e.right, i)
        if const_value(db) == 0.0:
            return div(da, e.right)
        return div(sub(mul(da, e.right), mul(e.left, db)), power(e.right, 2))
    if isinstance(e, Pow):
        db = diff_expr(e.base, i)
        return mul(mul(number(e.exponent), power(e.base, e.exponent - 1)), db)
    if isinstance(e, Func):
        da = diff_expr(e.arg, i)
        if const_value(da) == 0.0:
            return ZERO
        if e.name == "sin":
            return mul(func("cos", e.arg), da)
        if e.name == "cos":
            return mul(neg(func("sin", e.arg)), da)
        return mul(func("exp", e.arg), da)
    raise TypeError(f"not an expression node: {e!r}")


# --- polynomial normal form -------------------------------------------------

Polynomial = dict[tuple[int, ...], Fraction]


def to_polynomial(e: Expr, n: int) -> Polynomial | None:
    """Exact expansion into {exponent tuple: coefficient}, or None if not a polynomial."""
    if isinstance(e, Const):
        return _poly_const(Fraction(e.value), n)
    if isinstance(e, Var):
        if e.index > n:
            raise VariableIndexError(f"x{e.index} exceeds n={n}")
        mono = [0] * n
        mono[e.index - 1] = 1
        return {tuple(mono): Fraction(1)}
    if isinstance(e, Neg):
        p = to_polynomial(e.arg, n)
        return None if p is None else {m: -c for m, c in p.items()}
    if isinstance(e, (Add, Sub)):
        a, b = to_polynomial(e.left, n), to_polynomial(e.right, n)
        if a is None or b is None:
            return None
        sign = 1 if isinstance(e, Add) else -1
        out = dict(a)
        for m, c in b.items():
            out[m] = out.get(m, Fraction(0)) + sign * c
        return {m: c for m, c in out.items() if c != 0}
    if isinstance(e, Mul):
        a, b = to_polynomial(e.left, n), to_polynomial(e.right, n)
        if a is None or b is None:
            return None
        return _poly_mul(a, b)
    if isinstance(e, Div):
        a, b = to_polynomial(e.left, n), to_polynomial(e.right, n)
        if a is None or b is None or len(b) != 1 or any(next(iter(b))):
            return None
        c = next(iter(b.values()))
        return {m: v / c for m, v in a.items()}
    if isinstance(e, Pow):
        if e.exponent < 0:
            return None
        b = to_polynomial(e.base, n)
        if b is None:
            return None
        out = _poly_const(Fraction(1), n)
        for _ in range(e.exponent):
            out = _poly_mul(out, b)
        return out
    return None


def _poly_const(c: Fraction, n: int) -> Polynomial:
    return {} if c == 0 else {(0,) * n: c}


def _poly_mul(a: Polynomial, b: Polynomial) -> Polynomial:
    out: Polynomial = {}
    for ma, ca in a.items():
        for mb, cb in b.items():
            m = tuple(x + y for x, y in zip(ma, mb))
            out[m] = out.get(m, Fraction(0)) + ca * cb
    return {m: c for m, c in out.items() if c != 0}


def is_zero(e: Expr, n: int) -> bool | None:
    """Symbolic zero test: True/False for polynomials, None when undecided."""
    c = const_value(simplify(e))
    if c is not None:
        return c == 0.0
    p = to_polynomial(e, n)
    if p is None:
        return None
    return not p
