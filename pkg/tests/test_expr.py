import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvdisk.expr import (BinOp, Call, Const, ExprDomainError, ExprSyntaxError, Neg, Num, Var,
                           evaluate, parse, pretty)


@pytest.mark.parametrize("src, point, expected", [
    ("1 - 0.2*r^2", {"x1": 0.3, "x2": 0.4}, 1 - 0.2 * 0.25),
    ("1 + 0.1*cos(theta)", {"theta": 0.0}, 1.1),
    ("2^3^2", {}, 512.0),
    ("2^-1", {}, 0.5),
    ("-2^2", {}, -4.0),
    ("(1+2)*3 - 4/2", {}, 7.0),
    ("sqrt(x1^2 + x2^2) - r", {"x1": 0.6, "x2": -0.8}, 0.0),
    ("exp(log(3)) + abs(-2) + tan(0) + pi", {}, 5.0 + math.pi),
    ("1e-2 * 3.5E1", {}, 0.35),
])
def test_evaluation(src, point, expected):
    assert evaluate(src, **point) == pytest.approx(expected, abs=1e-14)


def test_polar_and_cartesian_agree():
    e = parse("x1*x2 + r^2*sin(theta)")
    th = np.linspace(0, 2 * np.pi, 17)
    rr = 0.7
    a = e.at_polar(rr, th)
    b = e.evaluate(rr * np.cos(th), rr * np.sin(th))
    assert np.allclose(a, b, atol=1e-14)


def test_horner_form_matches_expanded_polynomial():
    # same cubic written two ways
    p1 = parse("1 - 3*x1 + 2*x1^2 + 0.5*x1^3")
    p2 = parse("1 + x1*(-3 + x1*(2 + 0.5*x1))")
    xs = np.linspace(-1, 1, 41)
    assert np.allclose(p1.evaluate(xs, 0 * xs), p2.evaluate(xs, 0 * xs), atol=1e-14)


@pytest.mark.parametrize("src, offset", [
    ("sin(", 4), ("2x1", 1), ("1 + foo", 4), ("1 $ 2", 2), ("", 0), ("(1+2", 4), ("1 +", 3),
])
def test_syntax_errors_report_offset(src, offset):
    with pytest.raises(ExprSyntaxError) as info:
        parse(src)
    assert info.value.offset == offset


@pytest.mark.parametrize("src", ["sqrt(x1)", "log(x1)", "1/x1", "x1^0.5"])
def test_domain_errors(src):
    with pytest.raises(ExprDomainError):
        parse(src).evaluate(np.array([-1.0, 0.0]), np.array([0.0, 0.0]))


def test_variables_and_str():
    e = parse("x1 + cos(theta)*pi")
    assert e.variables == {"x1", "theta"}
    assert str(e) == "x1 + cos(theta) * pi"
    assert parse(str(e)) == e


def test_minimal_parentheses():
    assert pretty(parse("((x1))").ast) == "x1"
    assert str(parse("(1 - x1) - (x2 - 3)")) == "1 - x1 - (x2 - 3)"
    assert str(parse("(2^3)^2")) == "(2^3)^2"
    assert str(parse("2^(3^2)")) == "2^3^2"


def _ast():
    leaves = st.one_of(
        st.floats(0, 100, allow_nan=False).map(Num),
        st.sampled_from(["x1", "x2", "r", "theta"]).map(Var),
        st.just(Const("pi")))
    return st.recursive(leaves, lambda kids: st.one_of(
        kids.map(Neg),
        st.builds(BinOp, st.sampled_from(["+", "-", "*", "/", "^"]), kids, kids),
        st.builds(Call, st.sampled_from(["sin", "cos", "exp", "abs"]), kids)), max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(_ast())
def test_pretty_parse_round_trip(node):
    assert parse(pretty(node)).ast == node
