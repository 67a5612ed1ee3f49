import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riccert.errors import DomainError, NonDifferentiableError, ParseError, UnknownIdentifierError
from riccert.expr import BinOp, Const, Var, differentiate, evaluate, parse, to_string


def test_parse_tree_shape_and_value():
    e = parse("2*t + 1")
    assert isinstance(e, BinOp) and e.op == "+"
    assert isinstance(e.left, BinOp) and e.left.op == "*"
    assert isinstance(e.left.right, Var) and isinstance(e.right, Const)
    assert evaluate(e, 2.0) == 5.0


@pytest.mark.parametrize("t", [0.0, 0.7, 3.2])
def test_pythagorean(t):
    assert evaluate(parse("sin(t)^2 + cos(t)^2"), t) == pytest.approx(1.0, abs=1e-15)


def test_syntax_error_offset():
    with pytest.raises(ParseError) as info:
        parse("t +")
    assert info.value.offset == 3


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError):
        parse("tan(t)")
    with pytest.raises(UnknownIdentifierError):
        parse("x + 1")


def test_evaluate_examples():
    assert evaluate(parse("exp(0*t)"), 5.0) == 1.0
    assert evaluate(parse("t^3 - t"), 2.0) == 6.0


@pytest.mark.parametrize("text,t", [("1/t", 0.0), ("log(t)", 0.0), ("log(t)", -1.0), ("sqrt(t)", -2.0),
                                    ("t^(-1)", 0.0)])
def test_domain_errors(text, t):
    with pytest.raises(DomainError):
        evaluate(parse(text), t)


def test_domain_error_on_array_reports_location():
    with pytest.raises(DomainError) as info:
        evaluate(parse("1/(t-1)"), np.linspace(0, 2, 5))
    assert info.value.t == pytest.approx(1.0)


def test_vectorized_matches_scalar():
    e = parse("exp(-t)*sin(3*t) + t^2/(1+t^2)")
    t = np.linspace(-2, 2, 41)
    vec = evaluate(e, t)
    assert vec.shape == t.shape
    assert np.allclose(vec, [evaluate(e, float(x)) for x in t], rtol=0, atol=1e-15)


def test_constant_broadcasts_over_grid():
    out = evaluate(parse("3"), np.zeros(4))
    assert np.shape(out) == (4,) and np.all(out == 3.0)


def test_derivative_examples():
    d = differentiate(parse("sin(t)"))
    for t in (0.0, 0.4, 2.5):
        assert evaluate(d, t) == pytest.approx(math.cos(t), abs=1e-15)
    assert evaluate(differentiate(parse("7")), 1.3) == 0.0
    assert evaluate(differentiate(parse("t*exp(t)")), 1.0) == pytest.approx(2 * math.e, rel=1e-12)


def test_second_derivative():
    e = parse("t^3 + exp(2*t)")
    dd = differentiate(differentiate(e))
    assert evaluate(dd, 0.5) == pytest.approx(6 * 0.5 + 4 * math.exp(1.0), rel=1e-13)


def test_abs_not_differentiable():
    with pytest.raises(NonDifferentiableError):
        differentiate(parse("abs(t) + 1"))
    assert evaluate(parse("abs(t)"), -2.0) == 2.0


def test_constant_property():
    assert parse("2*3 + 1").is_constant
    assert not parse("t + 1").is_constant


def test_precedence_and_unary_minus():
    assert evaluate(parse("-t^2"), 3.0) == -9.0
    assert evaluate(parse("2^3^2"), 0.0) == 512.0
    assert evaluate(parse("1 - 2 - 3"), 0.0) == -4.0
    assert evaluate(parse("8/4/2"), 0.0) == 1.0


def test_number_forms():
    assert evaluate(parse("1e-3 + .5 + 2."), 0.0) == pytest.approx(2.501)


def test_round_trip_simple():
    for text in ("1 - (t - 2)", "(t + 1)^2", "-(t*2)", "2^-t", "exp(sin(t)) / (1 + t^2)"):
        s = to_string(parse(text))
        assert to_string(parse(s)) == s
        for t in (0.3, 1.7):
            assert evaluate(parse(s), t) == pytest.approx(evaluate(parse(text), t), rel=1e-14)


_leaf = st.one_of(st.just("t"), st.integers(0, 9).map(str), st.sampled_from(["0.5", "1.25", "3e-1"]))


def _build(children):
    return st.one_of(
        st.tuples(children, st.sampled_from("+-*/"), children).map(lambda x: f"({x[0]} {x[1]} {x[2]})"),
        st.tuples(st.sampled_from(["sin", "cos", "exp"]), children).map(lambda x: f"{x[0]}({x[1]})"),
        children.map(lambda x: f"-{x}"),
        children.map(lambda x: f"({x})^2"),
    )


formulas = st.recursive(_leaf, _build, max_leaves=8)


@settings(max_examples=150, deadline=None)
@given(formulas)
def test_round_trip_property(text):
    once = to_string(parse(text))
    assert to_string(parse(once)) == once


@settings(max_examples=100, deadline=None)
@given(formulas, st.floats(0.1, 1.9))
def test_printing_preserves_value(text, t):
    e = parse(text)
    try:
        v = evaluate(e, t)
    except DomainError:
        return
    if not math.isfinite(v) or abs(v) > 1e12:
        return
    assert evaluate(parse(to_string(e)), t) == pytest.approx(v, rel=1e-9, abs=1e-12)
