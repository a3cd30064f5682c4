import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from cartan_kit.cli import example_text
from cartan_kit.dsl import parse_expr, parse_problem
from cartan_kit.flow import (
    PathError, PathSpec, convergence_ratios, develop_along_path, monodromy_defect, path_independence_defect,
    pullback_residual,
)
from cartan_kit.flow import _derivative
from cartan_kit.symbolic import evaluate_many


@pytest.fixture(scope="module")
def scaled():
    return parse_problem(example_text("exp-scaled"))


@pytest.fixture(scope="module")
def plane():
    return parse_problem(example_text("punctured-plane-monodromy"))


def curve(param, **coords):
    return PathSpec(tuple(coords), curve={c: parse_expr(e) for c, e in coords.items()}, param=param)


def test_flat_translation_is_exact(scaled):
    flat = scaled.coframes["flat"]
    path = curve("s", x="-0.5 + s", y="0.3*sin(3*s)")
    dev = develop_along_path(flat, flat, {"x": -0.5, "y": 0.0}, {"x": -0.7, "y": -0.2}, path, 2000)
    assert np.allclose(dev.phi, dev.gamma + np.array([-0.2, -0.2]), atol=1e-12)
    assert pullback_residual(flat, flat, dev) <= 1e-8


def test_development_into_scaled_coframe_has_closed_form(scaled):
    # exp(phi1) phi1' = x', exp(phi1) phi2' = y'
    flat, tgt = scaled.coframes["flat"], scaled.coframes["scaled"]
    path = curve("s", x="-0.5 + s", y="0.4*s^2")
    q0 = {"x": 0.1, "y": 0.0}
    dev = develop_along_path(flat, tgt, {"x": -0.5, "y": 0.0}, q0, path, 400)
    s = dev.s
    phi1 = np.log(math.exp(0.1) + s)
    assert np.max(np.abs(dev.phi[:, 0] - phi1)) < 1e-10
    # phi2 = int 0.8 s / (e^0.1 + s) ds
    a = math.exp(0.1)
    phi2 = 0.8 * (s - a * np.log((a + s) / a))
    assert np.max(np.abs(dev.phi[:, 1] - phi2)) < 1e-10
    assert pullback_residual(flat, tgt, dev) < 1e-7


def test_development_matches_scipy_on_sphere():
    spec = parse_problem(example_text("constant-curvature-sphere"))
    th = spec.coframes["sphere"]
    path = curve("s", u="0.1 + 0.3*s", v="0.2 + 0.2*sin(2*s)", t="0.5 + s")
    p0 = {"u": 0.1, "v": 0.2, "t": 0.5}
    q0 = {"u": -0.2, "v": 0.1, "t": 0.9}
    dev = develop_along_path(th, th, p0, q0, path, 400)
    flat = [e for row in th.matrix for e in row]

    def M(x):
        return evaluate_many(flat, {c: np.array([v]) for c, v in zip(th.chart.coords, x)}, th.chart.env)[:, 0].reshape(3, 3)

    def rhs(s, x):
        g = np.array([0.1 + 0.3 * s, 0.2 + 0.2 * math.sin(2 * s), 0.5 + s])
        gd = np.array([0.3, 0.4 * math.cos(2 * s), 1.0])
        return np.linalg.solve(M(x), M(g) @ gd)

    sol = solve_ivp(rhs, (0, 1), [-0.2, 0.1, 0.9], rtol=1e-11, atol=1e-12)
    assert np.max(np.abs(sol.y[:, -1] - dev.final)) < 1e-8


def test_rk4_convergence_order():
    spec = parse_problem(example_text("surfaces-of-revolution"))
    th = spec.coframes["absorbed"]
    path = curve("s", u="1.1 + 0.2*sin(2*s)", v="0.3*s^2", t="0.5 + s")
    res, ratios = convergence_ratios(th, th, {"u": 1.1, "v": 0.0, "t": 0.5}, {"u": 1.1, "v": 0.4, "t": 0.5},
                                     path, [25, 50, 100, 200])
    assert res[-1] <= 1e-5
    assert all(12 <= r <= 20 for r in ratios)


def test_path_independence_for_flat(scaled):
    flat = scaled.coframes["flat"]
    p1 = PathSpec(("x", "y"), waypoints=((-0.5, 0.0), (0.5, 0.5)))
    p2 = PathSpec(("x", "y"), waypoints=((-0.5, 0.0), (-0.5, 0.5), (0.5, 0.5)))
    assert path_independence_defect(flat, flat, {"x": -0.5, "y": 0.0}, {"x": -0.6, "y": 0.0}, p1, p2, 200) < 1e-12
    p3 = PathSpec(("x", "y"), waypoints=((-0.5, 0.0), (0.4, 0.5)))
    with pytest.raises(PathError):
        path_independence_defect(flat, flat, {"x": -0.5, "y": 0.0}, {"x": 0.0, "y": 0.0}, p1, p3, 200)


@pytest.mark.parametrize("turns,tol", [(1, 1e-5), (2, 1e-4)])
def test_monodromy_counts_winding(plane, turns, tol):
    loop = curve("r", x=f"cos({2 * turns}*pi*r)", y=f"sin({2 * turns}*pi*r)")
    got = monodromy_defect(plane.form_systems["angle"], plane.coframes["line"], loop, {"s": 0.0})
    assert abs(got - 2 * math.pi * turns) <= tol


def test_contractible_loop_has_no_monodromy(plane):
    loop = curve("r", x="1.2 + 0.5*cos(2*pi*r)", y="0.5*sin(2*pi*r)")
    assert monodromy_defect(plane.form_systems["angle"], plane.coframes["line"], loop, {"s": 0.0}) <= 1e-7


def test_path_validation(plane, scaled):
    with pytest.raises(PathError):
        PathSpec(("x", "y"), waypoints=((0.0, 0.0),))
    with pytest.raises(PathError):
        PathSpec(("x", "y"), curve={"x": parse_expr("r")}, param="r")
    with pytest.raises(PathError):
        monodromy_defect(plane.form_systems["angle"], plane.coframes["line"],
                         curve("r", x="1 + 0.5*r", y="0.1"), {"s": 0.0})
    flat = scaled.coframes["flat"]
    with pytest.raises(PathError):  # path leaves the chart
        develop_along_path(flat, flat, {"x": 0.0, "y": 0.0}, {"x": 0.0, "y": 0.0},
                           PathSpec(("x", "y"), waypoints=((0.0, 0.0), (3.0, 0.0))), 100)
    with pytest.raises(PathError):  # does not start at p0
        develop_along_path(flat, flat, {"x": 0.1, "y": 0.0}, {"x": 0.0, "y": 0.0},
                           PathSpec(("x", "y"), waypoints=((0.0, 0.0), (0.5, 0.0))), 100)


def test_fourth_order_stencil_is_exact_on_quartics():
    x = np.linspace(0, 1, 21)
    y = np.stack([3 * x ** 4 - x ** 3 + 2 * x, x ** 2], axis=1)
    dy = np.stack([12 * x ** 3 - 3 * x ** 2 + 2, 2 * x], axis=1)
    assert np.max(np.abs(_derivative(y, x[1] - x[0]) - dy)) < 1e-10
