"""Realizations of a Cartan problem, the Maurer-Cartan defect, and equivalence by signatures."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .algebroid import TrivializedAlgebroid, orbit_and_isotropy
from .coframe import (
    ChainNotStabilized, Coframe, InvariantChain, NotRegular, coframe_derivative, invariant_chain,
    regularity_and_rank, signature, structure_functions,
)
from .forms import lie_bracket_fields
from .linalg import numeric_rank
from .symbolic import (
    DEFAULT_SEED, DEFAULT_TRIALS, ZERO, Chart, Expr, add, diff, evaluate_many, mul, neg, normalize, sub,
    subs,
)

REALIZATION_TOL = 1e-8
SIGNATURE_TOL = 1e-6


class DomainViolation(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Realization:
    """(M, theta, h) with h given by one expression on M per base coordinate.

    ``algebroid`` optionally records the classifying algebroid the map targets.
    """

    theta: Coframe
    h: tuple[Expr, ...]
    name: str = "R"
    algebroid: TrivializedAlgebroid | None = None

    @property
    def chart(self) -> Chart:
        return self.theta.chart


@dataclass
class RealizationReport:
    structure_residual: float
    anchor_residual: float
    tol: float
    samples: int
    seed: int
    worst: str = ""

    @property
    def residual(self) -> float:
        return max(self.structure_residual, self.anchor_residual)

    @property
    def passed(self) -> bool:
        return self.residual <= self.tol

    def as_dict(self) -> dict:
        return {"structure_residual": self.structure_residual, "anchor_residual": self.anchor_residual,
                "tol": self.tol, "samples": self.samples, "seed": self.seed, "pass": self.passed,
                "worst": self.worst}


def _check_dims(A: TrivializedAlgebroid, r: Realization) -> None:
    if A.tabulated:
        raise ValueError("realization checks need closed-form algebroid data")
    if r.theta.n != A.n:
        raise ValueError(f"coframe has {r.theta.n} forms but the algebroid has rank {A.n}")
    if len(r.h) != A.d:
        raise ValueError(f"map has {len(r.h)} components but the base has dimension {A.d}")


def _compose(A: TrivializedAlgebroid, r: Realization, e: Expr) -> Expr:
    return subs(e, dict(zip(A.base.coords, r.h)))


def _samples(A: TrivializedAlgebroid, r: Realization, trials: int, seed: int):
    pts = r.chart.sample(trials, seed)
    env = r.chart.env.merged(A.base.env)
    if A.d:
        hv = evaluate_many(list(r.h), pts, env)
        for q in range(hv.shape[1]):
            x = dict(zip(A.base.coords, hv[:, q]))
            if not A.base.contains(x):
                p = {c: float(pts[c][q]) for c in r.chart.coords}
                raise DomainViolation(f"h maps {p} to {x}, outside the base chart {A.base.name}")
    return pts, env


def _max_abs(labels, exprs, pts, env) -> tuple[float, str]:
    live = [(l, e) for l, e in zip(labels, exprs) if not e.is_zero]
    if not live:
        return 0.0, ""
    vals = np.abs(evaluate_many([e for _, e in live], pts, env)).reshape(len(live), -1)
    per = vals.max(axis=1)
    i = int(np.argmax(per))
    return float(per[i]), live[i][0]


def check_realization(A: TrivializedAlgebroid, r: Realization, tol: float = REALIZATION_TOL,
                      trials: int = DEFAULT_TRIALS, seed: int = DEFAULT_SEED) -> RealizationReport:
    """Check dtheta^k = sum (C^k_ij o h) theta^i^theta^j with C = -B, and dh_a = sum (F_i^a o h) theta^i."""
    _check_dims(A, r)
    pts, env = _samples(A, r, trials, seed)
    n = A.n
    rules = r.chart.rules
    C = structure_functions(r.theta)
    labels, exprs = [], []
    for (k, i, j), c in C.items():
        labels.append(f"C{k + 1}_{i + 1}{j + 1}")
        exprs.append(normalize(add(c, _compose(A, r, A.b(k, i, j))), rules))
    s_res, s_worst = _max_abs(labels, exprs, pts, env)
    labels, exprs = [], []
    for a, ha in enumerate(r.h):
        for i, dh in enumerate(coframe_derivative(ha, r.theta)):
            labels.append(f"F{i + 1}^{A.base.coords[a]}")
            exprs.append(normalize(sub(dh, _compose(A, r, A.F.get((i, a), ZERO))), rules))
    a_res, a_worst = _max_abs(labels, exprs, pts, env)
    worst = s_worst if s_res >= a_res else a_worst
    return RealizationReport(s_res, a_res, tol, trials if r.chart.dim else 1, seed, worst)


@dataclass
class MCDefect:
    curvature: float  # max |(d theta + 1/2 [theta, theta])(X_i, X_j)|
    anchor: float  # max |X_i(h_a) - F_i^a o h|
    seed: int
    samples: int

    @property
    def value(self) -> float:
        return max(self.curvature, self.anchor)

    def as_dict(self) -> dict:
        return {"curvature": self.curvature, "anchor": self.anchor, "value": self.value,
                "seed": self.seed, "samples": self.samples}


def mc_defect(A: TrivializedAlgebroid, r: Realization, trials: int = DEFAULT_TRIALS,
              seed: int = DEFAULT_SEED) -> MCDefect:
    """Generalized Maurer-Cartan defect of theta viewed as a bundle map TM -> A.

    With the trivial connection, (d theta)(X_i, X_j) = -theta([X_i, X_j]) and
    1/2 [theta, theta](X_i, X_j) = [e_i, e_j] o h = sum_k (B^k_ij o h) e_k, evaluated
    on the dual frame X.  Anchor compatibility rho o theta = dh is reported alongside.
    """
    _check_dims(A, r)
    pts, env = _samples(A, r, trials, seed)
    theta = r.theta
    n = A.n
    X = theta.dual_fields
    Th = theta.matrix
    rules = r.chart.rules
    labels, exprs = [], []
    for i in range(n):
        for j in range(i + 1, n):
            br = lie_bracket_fields(X[i], X[j]).components
            for k in range(n):
                dth = neg(add(*(mul(Th[k][mu], br[mu]) for mu in range(theta.chart.dim))))
                exprs.append(normalize(add(dth, _compose(A, r, A.b(k, i, j))), rules))
                labels.append(f"{k}{i}{j}")
    curv, _ = _max_abs(labels, exprs, pts, env)
    labels, exprs = [], []
    for a, ha in enumerate(r.h):
        for i in range(n):
            exprs.append(normalize(sub(X[i].apply(ha), _compose(A, r, A.F.get((i, a), ZERO))), rules))
            labels.append(f"{i}{a}")
    anc, _ = _max_abs(labels, exprs, pts, env)
    return MCDefect(curv, anc, seed, trials if r.chart.dim else 1)


@dataclass
class MapRank:
    points: list[dict[str, float]]
    ranks: list[int]
    orbit_dims: list[int]

    @property
    def consistent(self) -> bool:
        return self.ranks == self.orbit_dims


def classifying_map_rank(A: TrivializedAlgebroid, r: Realization,
                         points: Sequence[Mapping[str, float]] | None = None, trials: int = 16,
                         seed: int = DEFAULT_SEED) -> MapRank:
    """Rank of dh at each point next to the orbit dimension of A at h(point)."""
    _check_dims(A, r)
    if points is None:
        s = r.chart.sample(trials, seed)
        points = [{c: float(s[c][q]) for c in r.chart.coords} for q in range(trials)] if r.chart.dim else [{}]
    env = r.chart.env.merged(A.base.env)
    jac = [diff(e, c) for e in r.h for c in r.chart.coords]
    out_pts, ranks, orbits = [], [], []
    for p in points:
        p = r.chart.check_point(p)
        pt = {c: np.array([v]) for c, v in p.items()}
        if A.d:
            J = evaluate_many(jac, pt, env)[:, 0].reshape(A.d, r.chart.dim)
            hv = evaluate_many(list(r.h), pt, env)[:, 0]
            rank = numeric_rank(J)
        else:
            hv, rank = np.zeros(0), 0
        orbit = orbit_and_isotropy(A, hv).orbit_dim
        out_pts.append(p)
        ranks.append(int(rank))
        orbits.append(int(orbit))
    return MapRank(out_pts, ranks, orbits)


@dataclass
class Verdict:
    verdict: str  # equivalent / not-equivalent / undecided
    reason: str
    order: int | None = None
    max_difference: float | None = None
    details: dict = field(default_factory=dict)


def equivalence_test(theta1: Coframe, p: Mapping[str, float], theta2: Coframe, q: Mapping[str, float],
                     order: int | None = None, tol: float = SIGNATURE_TOL, max_order: int = 4,
                     seed: int = DEFAULT_SEED, chains: tuple[InvariantChain, InvariantChain] | None = None) -> Verdict:
    """Compare invariant signatures at p and q up to the stabilized order."""
    if theta1.n != theta2.n:
        return Verdict("not-equivalent", f"coframe sizes differ ({theta1.n} vs {theta2.n})")
    c1, c2 = chains or (invariant_chain(theta1, max_order=max_order, seed=seed),
                        invariant_chain(theta2, max_order=max_order, seed=seed))
    for c, label in ((c1, "first"), (c2, "second")):
        if c.stabilized_at is None:
            return Verdict("undecided", f"invariant chain of the {label} coframe did not stabilize by order {max_order}")
    for c, pt, label in ((c1, p, "p"), (c2, q, "q")):
        rep = regularity_and_rank(c, [pt], seed=seed)
        if not rep.fully_regular[0]:
            return Verdict("undecided", f"coframe is not fully regular at {label} (ranks nearby {rep.cloud_ranks[0]})")
    r1 = regularity_and_rank(c1, [p], seed=seed).ranks[0]
    r2 = regularity_and_rank(c2, [q], seed=seed).ranks[0]
    if r1 != r2:
        return Verdict("not-equivalent", f"invariant ranks differ ({r1} vs {r2})")
    k = max(c1.stabilized_at, c2.stabilized_at) + 1
    if order is not None:
        k = max(k, order)
    s1 = signature(theta1, p, k, chain=c1)
    s2 = signature(theta2, q, k, chain=c2)
    diff_ = np.abs(s1 - s2)
    worst = float(diff_.max()) if diff_.size else 0.0
    if worst <= tol:
        return Verdict("equivalent", "signatures agree", k, worst)
    names = c1.full_names(k)
    i = int(np.argmax(diff_))
    return Verdict("not-equivalent", f"signatures differ in {names[i]} ({s1[i]:.6g} vs {s2[i]:.6g})", k, worst,
                   {"slot": names[i]})
