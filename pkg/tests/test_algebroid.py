import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cartan_kit.algebroid import (
    AlgebroidForm, AxiomError, TrivializedAlgebroid, algebroid_differential, check_structure_equations,
    classify_isotropy_3d, function_form, lie_algebra, log_form, modular_cocycle, orbit_and_isotropy,
)
from cartan_kit.cli import example_text
from cartan_kit.coframe import CartanData
from cartan_kit.dsl import parse_expr, parse_problem
from cartan_kit.symbolic import Const, evaluate_many, max_discrepancy, sym
from helpers import random_expr


def constant_curvature(kappa):
    return lie_algebra(3, {(2, 0, 1): -kappa, (1, 0, 2): 1, (0, 1, 2): -1}, name=f"k{kappa}")


def structure_array(A: TrivializedAlgebroid) -> np.ndarray:
    B, _ = A.values_at([])
    return B


def killing(B: np.ndarray) -> np.ndarray:
    ad = [B[:, i, :] for i in range(B.shape[0])]  # ad(e_i)[k, j] = B[k, i, j]
    return np.array([[np.trace(a @ b) for b in ad] for a in ad])


@pytest.fixture(scope="module")
def surfaces():
    return parse_problem(example_text("surfaces-of-revolution"))


@pytest.fixture(scope="module")
def affine():
    return parse_problem(example_text("affinely-curved"))


@pytest.mark.parametrize("kappa,name", [(1, "so3"), (0, "se2"), (-1, "sl2")])
def test_constant_curvature_isotropy_class(kappa, name):
    A = constant_curvature(kappa)
    assert check_structure_equations(A).passed
    oi = orbit_and_isotropy(A, {})
    assert (oi.orbit_dim, oi.symmetry_dim) == (0, 3)
    assert classify_isotropy_3d(oi.isotropy) == name
    # Killing form oracle: definite, indefinite, degenerate
    ev = np.linalg.eigvalsh(killing(structure_array(A)))
    if name == "so3":
        assert np.all(ev < 0)
    elif name == "sl2":
        assert ev.min() < 0 < ev.max() and np.all(np.abs(ev) > 1e-9)
    else:
        assert 0 < np.sum(np.abs(ev) < 1e-12) < 3


def test_non_jacobi_bracket_fails_axioms():
    bad = lie_algebra(3, {(2, 0, 1): 1, (2, 1, 2): 1, (0, 0, 2): 1})
    rep = check_structure_equations(bad)
    assert not rep.passed and rep.jacobi_residual > 0.5


def test_solvable_algebra_classified_other():
    heis = lie_algebra(3, {(2, 0, 1): 1})
    assert classify_isotropy_3d(orbit_and_isotropy(heis, {}).isotropy) == "other"


def test_generic_algebroid_orbits_from_anchor_rank(surfaces):
    A = surfaces.algebroids["A"]
    rng = np.random.default_rng(7)
    for kappa, t in zip(rng.uniform(-1.8, -0.1, 20), rng.uniform(-3, 3, 20)):
        oi = orbit_and_isotropy(A, {"kappa": kappa, "t": t})
        _, R = A.values_at([kappa, t])
        assert oi.orbit_dim == np.linalg.matrix_rank(R) == 2
        assert oi.symmetry_dim == 1
        assert oi.isotropy.jacobi_residual() < 1e-12


def test_zero_anchor_gives_full_isotropy():
    # the generic bracket with the anchor switched off, as at a point where H and J vanish
    base = parse_problem("chart K { coords kappa in (-1, 1); }").charts["K"]
    k = sym("kappa")
    A = TrivializedAlgebroid(base, 3, {(2, 0, 1): -k, (1, 0, 2): Const(1), (0, 1, 2): Const(-1)}, {})
    for kappa, name in ((0.5, "so3"), (0.0, "se2"), (-0.5, "sl2")):
        oi = orbit_and_isotropy(A, {"kappa": kappa})
        assert oi.symmetry_dim == 3
        assert classify_isotropy_3d(oi.isotropy) == name


def test_riccati_and_perturbed(surfaces):
    ok = check_structure_equations(surfaces.algebroids["riccati"])
    bad = check_structure_equations(surfaces.algebroids["perturbed"])
    assert ok.passed and max(ok.bracket_residual, ok.jacobi_residual) <= 1e-7
    assert not bad.passed and max(bad.bracket_residual, bad.jacobi_residual) >= 1e-4


def test_affinely_curved_axioms_and_orbits(affine):
    B = affine.algebroids["B"]
    assert check_structure_equations(B).passed
    pts = B.base.sample(20, 3)
    for i in range(20):
        p = {c: pts[c][i] for c in B.base.coords}
        assert orbit_and_isotropy(B, p).orbit_dim == 2


def test_modular_class_of_lie_algebras_is_trace_of_ad():
    algebras = [constant_curvature(1), constant_curvature(-1), lie_algebra(2, {(1, 0, 1): 1}),
                lie_algebra(3, {(1, 0, 1): 1, (2, 0, 2): 2})]
    for A in algebras:
        c = modular_cocycle(A)
        tr = np.einsum("kik->i", structure_array(A))
        for i in range(A.n):
            assert float(evaluate_many([c.value((i,))], {})[0]) == pytest.approx(tr[i])


def test_generic_modular_cocycle(surfaces):
    A = surfaces.algebroids["A"]
    c = modular_cocycle(A)
    fn = ["H", "J"]
    want = [parse_expr("(H'(kappa) - J(kappa))*sin(t)", fn), parse_expr("-(H'(kappa) - J(kappa))*cos(t)", fn), Const(0)]
    for i in range(3):
        assert max_discrepancy(c.value((i,)), want[i], A.base, trials=100) <= 1e-9
    assert algebroid_differential(c).max_abs(trials=100) <= 1e-9


def test_rescaling_law_against_finite_differences(surfaces):
    # c_{f mu} - c_mu = rho(e_i)(log f), with the anchor derivative taken numerically
    A = surfaces.algebroids["A"]
    f = parse_expr("2 + sin(kappa*t) + kappa^2")
    delta = modular_cocycle(A, f) - modular_cocycle(A)
    pts = A.base.sample(10, 4)
    h = 1e-6
    for idx in range(10):
        x = np.array([pts["kappa"][idx], pts["t"][idx]])
        _, R = A.values_at(x)

        def logf(y):
            return np.log(float(evaluate_many([f], {"kappa": np.array([y[0]]), "t": np.array([y[1]])})[0][0]))

        grad = np.array([(logf(x + h * e) - logf(x - h * e)) / (2 * h) for e in np.eye(2)])
        want = R.T @ grad
        got = evaluate_many([delta.value((i,)) for i in range(3)],
                            {"kappa": x[:1], "t": x[1:]}, A.base.env)[:, 0]
        assert np.allclose(got, want, atol=1e-7)


def test_log_form_is_d_of_log():
    A = constant_curvature(1)
    assert log_form(A, Const(3)).is_zero
    assert function_form(A, Const(2)).degree == 0


@given(st.integers(0, 10_000))
@settings(max_examples=20)
def test_d_squared_on_affinely_curved(seed):
    B = parse_problem(example_text("affinely-curved")).algebroids["B"]
    rng = np.random.default_rng(seed)
    f, _ = random_expr(rng, ["kappa", "J", "t"], 2)
    w = algebroid_differential(algebroid_differential(function_form(B, f)))
    assert w.max_abs(trials=16) <= 1e-9


def test_top_degree_differential_raises():
    A = constant_curvature(0)
    with pytest.raises(ValueError):
        algebroid_differential(AlgebroidForm(A, 3, {(0, 1, 2): Const(1)}))


def test_from_cartan_data_rejects_broken_data():
    from cartan_kit.algebroid import from_cartan_data
    cd = CartanData(3, 0, [], None, {(2, 0, 1): Const(1), (2, 1, 2): Const(1), (0, 0, 2): Const(1)}, {}, "closed")
    with pytest.raises(AxiomError):
        from_cartan_data(cd)
