import numpy as np
import pytest

from cartan_kit.algebroid import check_structure_equations
from cartan_kit.cli import EXAMPLES, example_text
from cartan_kit.coframe import Coframe
from cartan_kit.dsl import parse_problem
from cartan_kit.realization import (
    DomainViolation, Realization, check_realization, classifying_map_rank, equivalence_test, mc_defect,
)
from cartan_kit.symbolic import Const, evaluate_many, mul
from helpers import numeric_structure


@pytest.fixture(scope="module")
def surfaces():
    return parse_problem(example_text("surfaces-of-revolution"))


def numeric_mc(r: Realization, n_points=6, seed=3) -> float:
    """Max |C + B o h| with C from finite-difference brackets of the dual frame."""
    A = r.algebroid
    chart = r.chart
    pts = chart.sample(n_points, seed)
    env = chart.env.merged(A.base.env)
    worst = 0.0
    for q in range(n_points):
        p = {c: float(pts[c][q]) for c in chart.coords}
        C = numeric_structure(r.theta, p)
        hv = evaluate_many(list(r.h), {c: np.array([v]) for c, v in p.items()}, env)[:, 0] if r.h else []
        B, _ = A.values_at(list(hv))
        worst = max(worst, float(np.max(np.abs(C + B))))
    return worst


def tilt(theta: Coframe, eps: float) -> Coframe:
    f = list(theta.forms)
    f[0] = f[0] + f[1].scale(Const(eps))
    return Coframe(theta.chart, tuple(f), name=theta.name + "_tilted")


def test_surface_realization_passes(surfaces):
    r = surfaces.realizations["surface"]
    rep = check_realization(r.algebroid, r)
    assert rep.passed
    assert mc_defect(r.algebroid, r).value <= 1e-8
    assert numeric_mc(r) <= 1e-6


def test_shifted_map_fails(surfaces):
    r = surfaces.realizations["shifted"]
    assert not check_realization(r.algebroid, r).passed
    assert mc_defect(r.algebroid, r).value > 1e-8


def test_tilted_coframe_fails_both_tests(surfaces):
    r = surfaces.realizations["surface"]
    bad = Realization(tilt(r.theta, 0.01), r.h, "tilted", r.algebroid)
    rep = check_realization(bad.algebroid, bad)
    mc = mc_defect(bad.algebroid, bad)
    assert not rep.passed and mc.value > 1e-8
    assert numeric_mc(bad) > 1e-4


@pytest.mark.parametrize("name", EXAMPLES)
def test_check_and_defect_agree_on_bundled_realizations(name):
    spec = parse_problem(example_text(name))
    for r in spec.realizations.values():
        passed = check_realization(r.algebroid, r).passed
        assert passed == (mc_defect(r.algebroid, r).value <= 1e-8), r.name
        if check_structure_equations(r.algebroid).passed and r.chart.dim <= 3:
            assert passed == (numeric_mc(r) <= 1e-6), r.name


def test_map_rank_matches_orbits(surfaces):
    r = surfaces.realizations["surface"]
    mr = classifying_map_rank(r.algebroid, r)
    assert mr.consistent and set(mr.ranks) == {2}


def test_map_outside_base_is_reported(surfaces):
    r = surfaces.realizations["surface"]
    far = Realization(r.theta, (mul(Const(10), r.h[0]), r.h[1]), "far", r.algebroid)
    with pytest.raises(DomainViolation):
        check_realization(far.algebroid, far)


def test_equivalence_verdicts(surfaces):
    theta = surfaces.coframes["absorbed"]
    p = {"u": 1.1, "v": 0.2, "t": 0.5}
    assert equivalence_test(theta, p, theta, {"u": 1.1, "v": 0.7, "t": 0.5}).verdict == "equivalent"
    v = equivalence_test(theta, p, theta, {"u": 1.2, "v": 0.7, "t": 0.5})
    assert v.verdict == "not-equivalent"
    # kappa = -2/(u^2+1) differs at first order, so the gap is at least the curvature gap
    assert v.max_difference >= abs(-2 / 2.21 + 2 / 2.44) - 1e-12


def test_equivalence_across_shifted_charts():
    text = """
    function h/1;
    chart M {{ coords u in ({lo}, {hi}), v in (-1, 1), t in (-3.5, 3.5); bind h(s) = (s + {c})^2 + 1; }}
    coframe f on M {{
      th1 = sin(t)*d[u] + cos(t)*h(u)*d[v];
      th2 = -cos(t)*d[u] + sin(t)*h(u)*d[v];
      eta = d[t] - h'(u)*d[v];
    }}
    """
    a = parse_problem(text.format(lo=0.7, hi=1.5, c=0)).coframes["f"]
    b = parse_problem(text.format(lo=0.4, hi=1.2, c=0.3)).coframes["f"]
    v = equivalence_test(a, {"u": 1.1, "v": 0.0, "t": 0.4}, b, {"u": 0.8, "v": 0.5, "t": 0.4})
    assert v.verdict == "equivalent"
    v = equivalence_test(a, {"u": 1.1, "v": 0.0, "t": 0.4}, b, {"u": 0.8, "v": 0.5, "t": 0.9})
    assert v.verdict == "not-equivalent"


def test_equivalence_undecided_without_stabilization(surfaces):
    theta = surfaces.coframes["absorbed"]
    p = {"u": 1.1, "v": 0.2, "t": 0.5}
    assert equivalence_test(theta, p, theta, p, max_order=0).verdict == "undecided"


def test_different_sizes_are_not_equivalent(surfaces):
    plane = parse_problem(example_text("nonunimodular-2d")).coframes["affine"]
    v = equivalence_test(plane, {"x": 0.0, "y": 0.0}, surfaces.coframes["absorbed"], {"u": 1.1, "v": 0.2, "t": 0.5})
    assert v.verdict == "not-equivalent"
