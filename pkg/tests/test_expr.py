import math

import numpy as np
import pytest
import sympy
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from frobcurrents.expr import (
    Add,
    Const,
    Div,
    EvaluationError,
    ExprSyntaxError,
    Func,
    Mul,
    Neg,
    Pow,
    Sub,
    UnknownIdentifierError,
    Var,
    VariableIndexError,
    bind,
    diff_expr,
    evaluate,
    is_zero,
    parse_expr,
    simplify,
    to_text,
)


def test_unary_minus_binds_the_quotient():
    assert parse_expr("-y/2", 3) == Neg(Div(Var(2), Const(2.0)))


def test_power_node_and_value():
    e = parse_expr("x*x + y^2", 3)
    assert e == Add(Mul(Var(1), Var(1)), Pow(Var(2), 2))
    assert evaluate(e, [1.0, 2.0, 0.0]) == 5.0


@pytest.mark.parametrize(
    "src, offset",
    [("sin(", 4), ("x +", 3), ("(x", 2), ("x ^ y", 4), ("2 $ 3", 2)],
)
def test_syntax_errors_report_offset(src, offset):
    with pytest.raises(ExprSyntaxError) as info:
        parse_expr(src)
    assert info.value.offset == offset


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError):
        parse_expr("sqrt(x)")
    with pytest.raises(UnknownIdentifierError):
        parse_expr("w + 1")
    with pytest.raises(UnknownIdentifierError):
        parse_expr("x + x4", 5)


def test_variable_index_checked_at_bind():
    e = parse_expr("x7")
    assert bind(e, 7) is e
    with pytest.raises(VariableIndexError):
        bind(e, 3)
    with pytest.raises(VariableIndexError):
        parse_expr("z", 2)


def test_precedence():
    assert parse_expr("1 + 2*3^2") == Add(Const(1.0), Mul(Const(2.0), Pow(Const(3.0), 2)))
    assert parse_expr("x - y - z") == Sub(Sub(Var(1), Var(2)), Var(3))
    assert parse_expr("x^-2") == Pow(Var(1), -2)
    assert parse_expr("cos(x)") == Func("cos", Var(1))


def test_evaluation_singularity():
    with pytest.raises(EvaluationError):
        evaluate(parse_expr("1/x"), [0.0, 0.0, 0.0])


def test_batched_evaluation():
    e = parse_expr("x*y + 1", 2)
    pts = np.array([[1.0, 2.0], [3.0, -1.0]])
    assert np.array_equal(evaluate(e, pts), [3.0, -2.0])
    assert np.array_equal(evaluate(parse_expr("3"), pts), [3.0, 3.0])


def test_diff_examples():
    assert to_text(diff_expr(parse_expr("x*y", 3), 1), 3) == "y"
    assert to_text(diff_expr(parse_expr("x + y", 3), 3), 3) == "0"
    fd = (math.sin(1.00001**2) - math.sin(0.99999**2)) / 2e-5
    value = evaluate(diff_expr(parse_expr("sin(x*x)"), 1), [1.0])
    assert value == pytest.approx(fd, rel=1e-6)
    assert value == pytest.approx(2 * math.cos(1.0), rel=1e-12)


def test_simplifier_identities():
    x = Var(1)
    assert simplify(Add(x, Const(0.0))) == x
    assert simplify(Mul(Const(1.0), x)) == x
    assert simplify(Mul(Const(0.0), x)) == Const(0.0)
    assert simplify(Add(Const(2.0), Const(3.0))) == Const(5.0)
    assert simplify(Pow(x, 1)) == x


def test_is_zero_on_polynomials():
    assert is_zero(parse_expr("x*y - y*x", 2), 2) is True
    assert is_zero(parse_expr("(x+y)^2 - x^2 - 2*x*y - y^2", 2), 2) is True
    assert is_zero(parse_expr("x - y", 2), 2) is False
    assert is_zero(parse_expr("sin(x)", 2), 2) is None


# --- random expression trees ---------------------------------------------------

N = 3
_SYM = sympy.symbols("x1:4")


def _leaf():
    return st.one_of(
        st.integers(0, 5).map(lambda v: Const(float(v))),
        st.integers(1, N).map(Var),
    )


def _extend(children):
    return st.one_of(
        st.tuples(children, children).map(lambda t: Add(*t)),
        st.tuples(children, children).map(lambda t: Sub(*t)),
        st.tuples(children, children).map(lambda t: Mul(*t)),
        st.tuples(children, children).map(lambda t: Div(t[0], Add(Const(2.0), Mul(t[1], t[1])))),
        st.tuples(children, st.integers(0, 3)).map(lambda t: Pow(*t)),
        children.map(Neg),
        st.tuples(st.sampled_from(["sin", "cos"]), children).map(lambda t: Func(*t)),
        children.map(lambda c: Func("exp", Func("sin", c))),
    )


exprs = st.recursive(_leaf(), _extend, max_leaves=8)


def _to_sympy(e):
    if isinstance(e, Const):
        return sympy.Float(e.value)
    if isinstance(e, Var):
        return _SYM[e.index - 1]
    if isinstance(e, Neg):
        return -_to_sympy(e.arg)
    if isinstance(e, Func):
        return getattr(sympy, e.name)(_to_sympy(e.arg))
    if isinstance(e, Pow):
        return _to_sympy(e.base) ** e.exponent
    a, b = _to_sympy(e.left), _to_sympy(e.right)
    op = {Add: sympy.Add, Sub: lambda p, q: p - q, Mul: sympy.Mul, Div: lambda p, q: p / q}[type(e)]
    return op(a, b)


points = st.lists(st.floats(-1.5, 1.5), min_size=N, max_size=N)


@settings(max_examples=200, deadline=None)
@given(exprs)
def test_round_trip_through_printer(e):
    assert parse_expr(to_text(e)) == e
    assert parse_expr(to_text(e, N), N) == e


@settings(max_examples=200, deadline=None)
@given(exprs, st.integers(1, N), points)
def test_derivative_matches_sympy(e, i, x):
    got = float(evaluate(diff_expr(e, i), x))
    want = float(sympy.diff(_to_sympy(e), _SYM[i - 1]).subs(dict(zip(_SYM, x))))
    assert got == pytest.approx(want, rel=1e-9, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(exprs, st.integers(1, N), points)
def test_derivative_matches_central_difference(e, i, x):
    h = 1e-5
    xp, xm = list(x), list(x)
    xp[i - 1] += h
    xm[i - 1] -= h
    fd = (float(evaluate(e, xp)) - float(evaluate(e, xm))) / (2 * h)
    exact = float(evaluate(diff_expr(e, i), x))
    # only compare where the third derivative is tame enough for step 1e-5
    d3 = diff_expr(diff_expr(diff_expr(e, i), i), i)
    assume(abs(float(evaluate(d3, x))) * h * h < 1e-7 * max(1.0, abs(exact)))
    assert fd == pytest.approx(exact, rel=1e-6, abs=1e-6)


@settings(max_examples=100, deadline=None)
@given(exprs, points)
def test_simplify_preserves_value(e, x):
    assert float(evaluate(simplify(e), x)) == pytest.approx(float(evaluate(e, x)), rel=1e-12, abs=1e-12)
