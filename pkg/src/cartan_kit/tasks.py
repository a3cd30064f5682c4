"""Run resolved problem-file tasks and turn outcomes into report entries."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .algebroid import (
    AXIOM_TOL, BracketNotClosed, algebroid_differential, check_structure_equations, classify_isotropy_3d,
    log_form, modular_cocycle, orbit_and_isotropy,
)
from .coframe import (
    ChainNotStabilized, NotRegular, invariant_chain, jacobi_defect_exprs, regularity_and_rank,
    select_independent_invariants, signature, structure_functions,
)
from .dsl.report import check
from .dsl.resolve import ExpectSpec, ProblemSpec, TaskSpec
from .flow import (
    convergence_ratios, develop_along_path, monodromy_defect, path_independence_defect, pullback_residual,
)
from .realization import (
    REALIZATION_TOL, SIGNATURE_TOL, check_realization, classifying_map_rank, equivalence_test, mc_defect,
)
from .symbolic import DEFAULT_SEED, DEFAULT_TRIALS, Chart, Expr, max_discrepancy, sample_values
from .symbolic.printer import to_str

EXPR_TOL = 1e-9
DEVELOP_TOL = 1e-5
ISOTROPY_TOL = 1e-8
MODULAR_TOL = 1e-9


@dataclass
class RunConfig:
    seed: int = DEFAULT_SEED
    tol: float | None = None
    trials: int = DEFAULT_TRIALS
    max_order: int = 4


class _Outcome:
    """Observed quantities of one task plus the chart used for symbolic expectations."""

    def __init__(self, seed: int, trials: int, tol: float):
        self.seed = seed
        self.trials = trials
        self.tol = tol
        self.observed: dict[str, Any] = {}
        self.verdict: bool | None = None  # intrinsic pass/fail of the computation, if it has one
        self.data: dict[str, Any] = {}
        self.checks: list[dict] = []
        self.expr_lookup: Callable[[tuple[int, ...]], Expr] | None = None
        self.expr_chart: Chart | None = None


def _params(task: TaskSpec, cfg: RunConfig, default_tol: float) -> _Outcome:
    p = task.params
    tol = p.get("tol", cfg.tol if cfg.tol is not None else default_tol)
    return _Outcome(p.get("seed", cfg.seed), p.get("trials", cfg.trials), tol)


def _point_str(p) -> dict[str, float]:
    return {k: float(v) for k, v in p.items()}


# ---------------------------------------------------------------------------
# runners


def run_analyze(task: TaskSpec, cfg: RunConfig) -> _Outcome:
    out = _params(task, cfg, EXPR_TOL)
    theta = task.params["coframe"]
    max_order = task.params.get("max_order", cfg.max_order)
    theta.check_nondegenerate(out.trials, out.seed)
    C = structure_functions(theta)
    out.data["structure_functions"] = {nm: to_str(e) for nm, (_, e) in zip(C.names(), C.items())}
    jac = [e for e in jacobi_defect_exprs(theta, C) if not e.is_zero]
    jres = float(np.max(np.abs(sample_values(jac, theta.chart, out.trials, out.seed)))) if jac else 0.0
    out.checks.append(check("d^2 = 0 identity", jres, 1e-8, out.seed, jres <= 1e-8))
    chain = invariant_chain(theta, max_order=max_order, trials=out.trials, seed=out.seed)
    out.data["chain"] = chain.summary()
    out.observed["stabilized_at"] = chain.stabilized_at
    out.observed["rank"] = chain.rank
    out.verdict = chain.stabilized_at is not None and jres <= 1e-8
    if "point" in task.params and chain.stabilized_at is not None:
        p = task.params["point"]
        rep = regularity_and_rank(chain, [p], radius=task.params.get("radius", 0.05), seed=out.seed)
        out.observed["rank"] = rep.ranks[0]
        out.observed["fully_regular"] = rep.fully_regular[0]
        out.data["point"] = _point_str(rep.points[0])
        out.data["nearby_ranks"] = rep.cloud_ranks[0]
        if rep.fully_regular[0]:
            sel = select_independent_invariants(chain, p, seed=out.seed)
            out.data["invariants"] = sel
            out.observed["d"] = len(sel)
    out.observed["pass"] = out.verdict
    out.expr_lookup = lambda idx: C(idx[0] - 1, idx[1] - 1, idx[2] - 1)
    out.expr_chart = theta.chart
    return out


def run_signature(task: TaskSpec, cfg: RunConfig) -> _Outcome:
    out = _params(task, cfg, EXPR_TOL)
    theta = task.params["coframe"]
    chain = invariant_chain(theta, max_order=cfg.max_order, trials=out.trials, seed=out.seed)
    order = task.params.get("order")
    if order is None:
        if chain.stabilized_at is None:
            raise ChainNotStabilized(f"invariant chain did not stabilize within order {cfg.max_order}")
        order = chain.stabilized_at + 1
    sig = signature(theta, task.params["point"], order, chain=chain)
    out.data["order"] = order
    out.data["signature"] = dict(zip(chain.full_names(order), (float(x) for x in sig)))
    out.verdict = bool(np.all(np.isfinite(sig)))
    out.observed["pass"] = out.verdict
    return out


def run_algebroid_check(task: TaskSpec, cfg: RunConfig) -> _Outcome:
    out = _params(task, cfg, AXIOM_TOL)
    A = task.params["algebroid"]
    rep = check_structure_equations(A, out.tol, out.trials, out.seed)
    out.data["axioms"] = rep.as_dict()
    out.verdict = rep.passed
    out.observed.update(residual=max(rep.bracket_residual, rep.jacobi_residual),
                        bracket_residual=rep.bracket_residual, jacobi_residual=rep.jacobi_residual)
    out.observed["pass"] = rep.passed
    return out


def run_isotropy(task: TaskSpec, cfg: RunConfig) -> _Outcome:
    out = _params(task, cfg, ISOTROPY_TOL)
    A = task.params["algebroid"]
    if "point" in task.params:
        pts = [task.params["point"]]
    else:
        n = task.params["samples"]
        s = A.base.sample(n, out.seed)
        pts = [{c: float(s[c][q]) for c in A.base.coords} for q in range(n)] if A.d else [{}]
    orbits, syms, classes, jres = [], [], [], 0.0
    for p in pts:
        oi = orbit_and_isotropy(A, p, out.tol)
        orbits.append(oi.orbit_dim)
        syms.append(oi.symmetry_dim)
        jres = max(jres, oi.isotropy.jacobi_residual())
        classes.append(classify_isotropy_3d(oi.isotropy) if oi.isotropy.dimension == 3 else None)

    def single(vals):
        return vals[0] if len(set(vals)) == 1 else sorted(set(v for v in vals if v is not None))

    out.data.update(points=len(pts), orbit_dims=sorted(set(orbits)), symmetry_dims=sorted(set(syms)),
                    isotropy_jacobi_residual=jres)
    if len(pts) == 1:
        out.data["point"] = _point_str(pts[0])
    out.observed.update(orbit_dim=single(orbits), symmetry_dim=single(syms), dimension=single(syms),
                        **{"class": single(classes)})
    out.data["class"] = out.observed["class"]
    out.verdict = jres <= 1e-8
    out.observed["pass"] = out.verdict
    return out


def run_modular(task: TaskSpec, cfg: RunConfig) -> _Outcome:
    out = _params(task, cfg, MODULAR_TOL)
    A = task.params["algebroid"]
    density = task.params.get("density")
    c = modular_cocycle(A, density)
    closed = algebroid_differential(c).max_abs(out.trials, out.seed)
    out.data["cocycle"] = [to_str(c.value((i,))) for i in range(A.n)]
    out.checks.append(check("d_A c = 0", closed, out.tol, out.seed, closed <= out.tol))
    out.observed["closed"] = closed
    if density is not None:
        law = (c - modular_cocycle(A) - log_form(A, density)).max_abs(out.trials, out.seed)
        out.observed["rescaling"] = law
        out.checks.append(check("rescaling law", law, 1e-8, out.seed, law <= 1e-8))
    out.verdict = all(ch["pass"] for ch in out.checks)
    out.observed["pass"] = out.verdict
    out.expr_lookup = lambda idx: c.value((idx[0] - 1,))
    out.expr_chart = A.base
    return out


def run_check_realization(task: TaskSpec, cfg: RunConfig) -> _Outcome:
    out = _params(task, cfg, REALIZATION_TOL)
    r = task.params["realization"]
    A = r.algebroid
    if A is None:
        raise ValueError(f"realization {r.name} has no target algebroid")
    rep = check_realization(A, r, out.tol, out.trials, out.seed)
    mc = mc_defect(A, r, out.trials, out.seed)
    agree = rep.passed == (mc.value <= out.tol)
    out.data.update(realization=rep.as_dict(), mc_defect=mc.as_dict())
    out.checks.append(check("realization check agrees with the Maurer-Cartan defect", mc.value, out.tol, out.seed,
                            agree, realization_pass=rep.passed))
    ranks = classifying_map_rank(A, r, trials=8, seed=out.seed)
    out.data["map_ranks"] = sorted(set(ranks.ranks))
    out.data["orbit_dims"] = sorted(set(ranks.orbit_dims))
    out.verdict = rep.passed
    out.observed.update(mc_defect=mc.value, map_rank=ranks.ranks[0] if len(set(ranks.ranks)) == 1 else ranks.ranks)
    out.observed["pass"] = rep.passed
    if rep.passed:
        out.checks.append(check("map rank equals orbit dimension", 0, None, out.seed, ranks.consistent))
    return out


def run_equiv(task: TaskSpec, cfg: RunConfig) -> _Outcome:
    out = _params(task, cfg, SIGNATURE_TOL)
    p = task.params
    v = equivalence_test(p["coframe"], p["point"], p["coframe2"], p["point2"], order=p.get("order"), tol=out.tol,
                         max_order=p.get("max_order", cfg.max_order), seed=out.seed)
    out.data.update(verdict=v.verdict, reason=v.reason, order=v.order, max_difference=v.max_difference, **v.details)
    out.observed["verdict"] = v.verdict
    return out


def run_develop(task: TaskSpec, cfg: RunConfig) -> _Outcome:
    out = _params(task, cfg, DEVELOP_TOL)
    p = task.params
    src, tgt, path = p["source"], p["target"], p["path"]
    dev = develop_along_path(src, tgt, p["from"], p["to"], path, p.get("steps"))
    res = pullback_residual(src, tgt, dev)
    out.data.update(steps=len(dev.s) - 1, final=dict(zip(tgt.chart.coords, map(float, dev.final))))
    out.observed["residual"] = res
    out.checks.append(check("pullback residual", res, out.tol, out.seed, res <= out.tol))
    if "path2" in p:
        out.observed["path_defect"] = path_independence_defect(src, tgt, p["from"], p["to"], path, p["path2"],
                                                               p.get("steps"))
        out.data["path_defect"] = out.observed["path_defect"]
    if "convergence" in p:
        res_n, ratios = convergence_ratios(src, tgt, p["from"], p["to"], path, p["convergence"])
        out.data["convergence"] = {"steps": list(p["convergence"]), "residuals": res_n, "ratios": ratios}
        if ratios:
            out.observed["ratio_min"] = min(ratios)
            out.observed["ratio_max"] = max(ratios)
    if "residual_against" in p:
        other = p["residual_against"]
        if tuple(other.chart.coords) != tuple(tgt.chart.coords):
            raise ValueError("residual_against must live on the target chart's coordinates")
        out.observed["mismatch"] = pullback_residual(src, other, dev)
        out.data["mismatch"] = out.observed["mismatch"]
    out.verdict = res <= out.tol
    out.observed["pass"] = out.verdict
    return out


def run_monodromy(task: TaskSpec, cfg: RunConfig) -> _Outcome:
    out = _params(task, cfg, DEVELOP_TOL)
    p = task.params
    d1 = monodromy_defect(p["source"], p["target"], p["path"], p["to"], p.get("steps"))
    out.observed["defect"] = d1
    out.data["defect"] = d1
    if "path2" in p:
        d2 = monodromy_defect(p["source"], p["target"], p["path2"], p["to"], p.get("steps"))
        out.observed["reparam_defect"] = abs(d1 - d2)
        out.data["reparam_defect"] = abs(d1 - d2)
    return out


RUNNERS: dict[str, Callable[[TaskSpec, RunConfig], _Outcome]] = {
    "analyze": run_analyze, "signature": run_signature, "algebroid-check": run_algebroid_check,
    "isotropy": run_isotropy, "modular": run_modular, "check-realization": run_check_realization,
    "equiv": run_equiv, "develop": run_develop, "monodromy": run_monodromy,
}


# ---------------------------------------------------------------------------
# expectations


def _label(e: ExpectSpec) -> str:
    idx = f"[{','.join(map(str, e.index))}]" if e.index else ""
    v = e.value
    text = to_str(v) if isinstance(v, Expr) else str(v).lower() if isinstance(v, bool) else f"{v:g}" if isinstance(v, float) else str(v)
    return f"expect {e.key}{idx} {e.op} {text}"


def _compare(obs: float, op: str, target: float, within: float) -> bool:
    if op == "=":
        return abs(obs - target) <= within
    if op == "<=":
        return obs <= target + within
    if op == ">=":
        return obs >= target - within
    if op == "<":
        return obs < target
    return obs > target


def evaluate_expectation(e: ExpectSpec, out: _Outcome) -> dict:
    label = _label(e)
    if isinstance(e.value, Expr):
        if out.expr_lookup is None:
            return check(label, None, e.within, out.seed, False, observed="unavailable")
        got = out.expr_lookup(e.index)
        tol = e.within if e.within is not None else EXPR_TOL
        gap = max_discrepancy(got, e.value, out.expr_chart, out.trials, out.seed)
        return check(label, gap, tol, out.seed, gap <= tol, observed=to_str(got), expected=to_str(e.value))
    key = e.key
    if key not in out.observed or out.observed[key] is None:
        return check(label, None, e.within, out.seed, False, observed="unavailable", expected=e.value)
    got = out.observed[key]
    if isinstance(e.value, (bool, str)):
        return check(label, got, None, out.seed, got == e.value, expected=e.value)
    if not isinstance(got, (int, float)) or isinstance(got, bool):
        return check(label, got, e.within, out.seed, False, expected=e.value)
    within = e.within if e.within is not None else 0.0
    return check(label, got, within, out.seed, _compare(float(got), e.op, float(e.value), within), expected=e.value)


def run_task(task: TaskSpec, cfg: RunConfig | None = None) -> dict:
    """Run one task; failures of the computation become a failed entry with an error message."""
    cfg = cfg or RunConfig()
    entry: dict[str, Any] = {"kind": task.kind, "name": task.name, "line": task.span.line}
    try:
        out = RUNNERS[task.kind](task, cfg)
    except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError, NotRegular, ChainNotStabilized,
            BracketNotClosed) as exc:
        entry.update({"pass": False, "error": f"{type(exc).__name__}: {exc}", "checks": [], "data": {},
                      "seed": cfg.seed, "tol": cfg.tol, "trials": cfg.trials})
        return entry
    checks = list(out.checks)
    keys = {e.key for e in task.expects}
    if out.verdict is not None and "pass" not in keys:
        checks.append(check("expect pass = true (implicit)", out.verdict, None, out.seed, bool(out.verdict), expected=True))
    for e in task.expects:
        checks.append(evaluate_expectation(e, out))
    entry.update({"pass": all(c["pass"] for c in checks), "checks": checks, "data": out.data,
                  "seed": out.seed, "tol": out.tol, "trials": out.trials})
    return entry


def run_problem(spec: ProblemSpec, cfg: RunConfig | None = None, kinds: set[str] | None = None,
                names: set[str] | None = None) -> list[dict]:
    """Run tasks in declaration order, optionally filtered by kind and name."""
    out = []
    for t in spec.tasks:
        if kinds and t.kind not in kinds:
            continue
        if names and t.name not in names:
            continue
        out.append(run_task(t, cfg))
    return out
