from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from cartan_kit.symbolic import (
    Chart, Const, Constraint, EvaluationError, ExprBinding, ODEBinding, RewriteRule, SamplingError, add,
    apply_rules, as_expr, cos, diff, evaluate, evaluate_many, exp, func, log, mul, normalize, power,
    probably_equal, sin, sqrt, sub, subs, sym, to_str,
)
from cartan_kit.dsl import parse_expr
from helpers import box, random_expr, rel_gap

x, y, z = sym("x"), sym("y"), sym("z")


def test_decimal_literals_are_exact():
    assert as_expr(0.1) == Const(Fraction(1, 10))
    assert add(as_expr(0.1), as_expr(0.2)) == Const(Fraction(3, 10))


def test_like_terms_collect():
    assert add(x, x) == mul(Const(2), x)
    assert sub(mul(x, y), mul(y, x)).is_zero
    assert power(x, 0) == Const(1)


def test_pythagorean_identity_is_canonical():
    assert normalize(add(power(sin(x), 2), power(cos(x), 2))) == Const(1)
    assert normalize(sub(power(sqrt(add(x, Const(2))), 2), x)) == Const(2)


@given(st.integers(0, 10_000))
def test_add_and_mul_commute(seed):
    rng = np.random.default_rng(seed)
    a, _ = random_expr(rng, "xy", 2)
    b, _ = random_expr(rng, "xy", 2)
    assert add(a, b) == add(b, a)
    assert mul(a, b) == mul(b, a)


@given(st.integers(0, 10_000))
def test_evaluation_matches_numpy_oracle(seed):
    rng = np.random.default_rng(seed)
    e, f = random_expr(rng, "xyz", 3)
    pts = {c: rng.uniform(-1, 1, 32) for c in "xyz"}
    got = evaluate_many([e], pts)[0]
    want = np.broadcast_to(f(pts), got.shape)
    assert rel_gap(got, want) < 1e-10


@given(st.integers(0, 10_000))
def test_derivative_matches_central_differences(seed):
    rng = np.random.default_rng(seed)
    e, f = random_expr(rng, "xy", 3)
    de = diff(e, "x")
    pts = {"x": rng.uniform(-0.8, 0.8, 16), "y": rng.uniform(-0.8, 0.8, 16)}
    h = 1e-5
    fd = (f({**pts, "x": pts["x"] + h}) - f({**pts, "x": pts["x"] - h})) / (2 * h)
    got = evaluate_many([de], pts)[0]
    assert rel_gap(got, np.broadcast_to(fd, got.shape)) < 1e-5


def test_abstract_function_chain_rule():
    e = func("h", mul(x, y))
    assert diff(e, "x") == mul(y, func("h", mul(x, y), 1))
    assert diff(func("h", x, 2), "x") == func("h", x, 3)


def test_subs_and_free_coordinates():
    e = add(power(x, 2), y)
    assert subs(e, {"x": add(y, Const(1))}) == normalize(add(power(y, 2), mul(Const(3), y), Const(1)))


def test_evaluation_domain_errors():
    with pytest.raises(EvaluationError):
        evaluate(log(x), {"x": -1.0})
    with pytest.raises(EvaluationError):
        evaluate(sqrt(x), {"x": -4.0})
    with pytest.raises(EvaluationError):
        evaluate(power(x, -1), {"x": 0.0})


def test_expression_binding_and_derivatives():
    c = box("M", ["u"], 0.5, 2.0, bindings={"h": ExprBinding("s", add(power(sym("s"), 2), Const(1)))})
    e = func("h", sym("u"), 2)
    assert evaluate(e, {"u": 1.3}, c.env) == pytest.approx(2.0)
    assert evaluate(func("h", sym("u"), 1), {"u": 1.3}, c.env) == pytest.approx(2.6)


def test_ode_binding_agrees_with_scipy():
    J = ODEBinding("s", "J", sub(mul(Const(-1), sym("s")), power(sym("J"), 2)), 1.0, 1.0)
    c = box("X", ["k"], 0.8, 1.2, bindings={"J": J})
    grid = np.linspace(0.8, 1.2, 9)
    sol = solve_ivp(lambda s, j: -s - j ** 2, (1.0, 0.8), [1.0], rtol=1e-12, atol=1e-13, dense_output=True)
    sol2 = solve_ivp(lambda s, j: -s - j ** 2, (1.0, 1.2), [1.0], rtol=1e-12, atol=1e-13, dense_output=True)
    want = np.where(grid < 1.0, sol.sol(grid)[0], sol2.sol(grid)[0])
    got = evaluate_many([func("J", sym("k"))], {"k": grid}, c.env)[0]
    assert np.max(np.abs(got - want)) < 1e-9
    # J' follows the differential equation itself
    d1 = evaluate_many([func("J", sym("k"), 1)], {"k": grid}, c.env)[0]
    assert np.max(np.abs(d1 - (-grid - want ** 2))) < 1e-8


def test_rewrite_rule_with_pattern_variables():
    k = sym("?k")
    rule = RewriteRule(mul(func("J", k, 1), func("H", k)), sub(mul(Const(-1), k), power(func("J", k), 2)), "riccati")
    e = add(mul(func("J", x, 1), func("H", x)), power(func("J", x), 2))
    assert apply_rules(e, [rule]) == mul(Const(-1), x)


def test_rule_rhs_must_use_bound_patterns():
    with pytest.raises(ValueError):
        RewriteRule(func("J", sym("?k")), sym("?m"), "bad")


def test_sampling_respects_constraints():
    c = Chart("P", ("a", "b"), ((-1, 1), (-1, 1)), (Constraint(add(power(sym("a"), 2), power(sym("b"), 2)), ">", Const(Fraction(1, 4))),))
    pts = c.sample(200, 3)
    assert np.all(pts["a"] ** 2 + pts["b"] ** 2 > 0.25)
    empty = Chart("Q", ("a",), ((0, 1),), (Constraint(sym("a"), ">", Const(2)),))
    with pytest.raises(SamplingError):
        empty.sample(10, 0)


def test_probably_equal_detects_difference():
    c = box("B", ["x"])
    assert probably_equal(exp(add(x, x)), power(exp(x), 2), c)
    assert not probably_equal(sin(x), add(sin(x), Const(Fraction(1, 10 ** 6))), c)


@given(st.integers(0, 10_000))
def test_printed_form_reparses_to_the_same_function(seed):
    rng = np.random.default_rng(seed)
    e, f = random_expr(rng, "xy", 3)
    back = parse_expr(to_str(e))
    pts = {"x": rng.uniform(-1, 1, 16), "y": rng.uniform(-1, 1, 16)}
    got = evaluate_many([back], pts)[0]
    assert rel_gap(got, np.broadcast_to(f(pts), got.shape)) < 1e-10
