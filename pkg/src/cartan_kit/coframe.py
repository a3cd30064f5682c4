"""Coframes, structure functions, and the invariant chain."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping, Sequence

import numpy as np

from .forms import (
    DifferentialForm, VectorField, determinant, exterior_derivative, expand_in_basis, inverse,
)
from .linalg import numeric_rank
from .symbolic import (
    DEFAULT_SEED, DEFAULT_TOL, DEFAULT_TRIALS, ZERO, Chart, Expr, add, evaluate_many, mul, neg,
    normalize, subs, to_str,
)
from .symbolic.chart import close

DEGENERACY_RTOL = 1e-9


class DegenerateCoframe(ValueError):
    pass


class NotRegular(ValueError):
    pass


class ChainNotStabilized(ValueError):
    pass


class InconsistentData(ValueError):
    """Level-set constancy or closed-form verification failed."""


@dataclass(frozen=True, eq=False)
class Coframe:
    chart: Chart
    forms: tuple[DifferentialForm, ...]
    name: str = "theta"
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        forms = tuple(self.forms)
        object.__setattr__(self, "forms", forms)
        if len(forms) != self.chart.dim:
            raise ValueError(f"coframe {self.name}: {len(forms)} forms on a {self.chart.dim}-dimensional chart")
        for f in forms:
            if f.degree != 1 or f.chart != self.chart:
                raise ValueError(f"coframe {self.name}: every member must be a 1-form on chart {self.chart.name}")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"th{i + 1}" for i in range(len(forms))))

    @property
    def n(self) -> int:
        return len(self.forms)

    @cached_property
    def matrix(self) -> list[list[Expr]]:
        """Theta[i][mu]: coefficient of dx^mu in theta^i."""
        return [f.components() for f in self.forms]

    def check_nondegenerate(self, trials: int = DEFAULT_TRIALS, seed: int = DEFAULT_SEED) -> None:
        pts = self.chart.sample(trials, seed)
        flat = [c for row in self.matrix for c in row]
        vals = evaluate_many(flat, pts, self.chart.env).reshape(self.n, self.n, -1)
        mats = np.moveaxis(vals, -1, 0)
        det = np.linalg.det(mats)
        scale = np.prod(np.linalg.norm(mats, axis=2), axis=1)
        bad = np.abs(det) <= DEGENERACY_RTOL * np.maximum(scale, 1e-300)
        if np.any(bad):
            i = int(np.argmax(bad))
            p = {c: float(pts[c][i]) for c in self.chart.coords}
            raise DegenerateCoframe(f"coframe {self.name} is degenerate near {p}")

    @cached_property
    def _inverse(self) -> tuple[list[list[Expr]], Expr]:
        try:
            return inverse(self.matrix, self.chart.rules)
        except ZeroDivisionError as exc:
            raise DegenerateCoframe(f"coframe {self.name} has identically zero determinant") from exc

    @property
    def inverse_matrix(self) -> list[list[Expr]]:
        """inv[mu][i] with dx^mu = sum_i inv[mu][i] theta^i."""
        return self._inverse[0]

    @property
    def determinant(self) -> Expr:
        return self._inverse[1]

    @cached_property
    def dual_fields(self) -> tuple[VectorField, ...]:
        """X_i with theta^j(X_i) = delta_ij."""
        inv = self.inverse_matrix
        return tuple(VectorField(self.chart, tuple(inv[mu][i] for mu in range(self.n))) for i in range(self.n))

    def expand(self, a: DifferentialForm) -> dict[tuple[int, ...], Expr]:
        return expand_in_basis(a, self.inverse_matrix)

    def derivative(self, f: Expr) -> tuple[Expr, ...]:
        return coframe_derivative(f, self)

    def __str__(self) -> str:
        return "; ".join(f"{l} = {f}" for l, f in zip(self.labels, self.forms))


def expand_in_coframe(a: DifferentialForm, theta: Coframe) -> dict[tuple[int, ...], Expr]:
    """Coefficients c_I with a = sum_I c_I theta^I (increasing I, 0-based)."""
    if a.chart != theta.chart:
        raise ValueError("form and coframe live on different charts")
    return theta.expand(a)


def coframe_derivative(f: Expr, theta: Coframe) -> tuple[Expr, ...]:
    """The coefficients of df in the coframe: df = sum_k X_k(f) theta^k."""
    rules = theta.chart.rules
    return tuple(normalize(x.apply(f), rules) for x in theta.dual_fields)


@dataclass(frozen=True)
class StructureFunctions:
    """C^k_ij for i<j (0-based keys), with dtheta^k = sum_{i<j} C^k_ij theta^i ^ theta^j."""

    n: int
    table: Mapping[tuple[int, int, int], Expr]

    def __call__(self, k: int, i: int, j: int) -> Expr:
        if i == j:
            return ZERO
        if i < j:
            return self.table.get((k, i, j), ZERO)
        return neg(self.table.get((k, j, i), ZERO))

    def items(self):
        for k in range(self.n):
            for i in range(self.n):
                for j in range(i + 1, self.n):
                    yield (k, i, j), self.table.get((k, i, j), ZERO)

    def names(self) -> list[str]:
        return [entry_name(k, i, j, self.n) for (k, i, j), _ in self.items()]


def entry_name(k: int, i: int, j: int, n: int) -> str:
    if n < 10:
        return f"C{k + 1}_{i + 1}{j + 1}"
    return f"C{k + 1}_{i + 1}_{j + 1}"


def structure_functions(theta: Coframe) -> StructureFunctions:
    table = {}
    if theta.n < 2:  # no 2-forms on a line
        return StructureFunctions(theta.n, table)
    for k, form in enumerate(theta.forms):
        for I, c in theta.expand(exterior_derivative(form)).items():
            table[(k,) + I] = c
    return StructureFunctions(theta.n, table)


def jacobi_defect_exprs(theta: Coframe, C: StructureFunctions | None = None) -> list[Expr]:
    """Components of the identity that d(dtheta) = 0 forces on C and its coframe derivatives.

    For every i and j<k<l:
      X_j(C^i_kl) + X_k(C^i_lj) + X_l(C^i_jk)
        + sum_m (C^i_mj C^m_kl + C^i_mk C^m_lj + C^i_ml C^m_jk)
    vanishes.
    """
    C = C or structure_functions(theta)
    n = theta.n
    rules = theta.chart.rules
    X = theta.dual_fields
    out = []
    for i in range(n):
        for j in range(n):
            for k in range(j + 1, n):
                for l in range(k + 1, n):
                    terms = [X[j].apply(C(i, k, l)), X[k].apply(C(i, l, j)), X[l].apply(C(i, j, k))]
                    for m in range(n):
                        terms.append(mul(C(i, m, j), C(m, k, l)))
                        terms.append(mul(C(i, m, k), C(m, l, j)))
                        terms.append(mul(C(i, m, l), C(m, j, k)))
                    out.append(normalize(add(*terms), rules))
    return out


# ---------------------------------------------------------------------------
# invariant chain


def _split_name(name: str) -> tuple[str, int | None]:
    if "|" not in name:
        return name, None
    base, _, i = name.rpartition("|")
    return base, int(i)


@dataclass
class Member:
    name: str
    expr: Expr
    generation: int


@dataclass
class InvariantChain:
    """Structure functions and their iterated coframe derivatives.

    ``members`` holds the distinct functions (in creation order).  A name whose
    function duplicates an earlier member is recorded in ``aliases`` instead and
    is never differentiated; every name of the full derivative tree still
    resolves, which keeps signatures of different coframes aligned.
    """

    theta: Coframe
    samples: Mapping[str, np.ndarray]
    tol: float
    members: list[Member] = field(default_factory=list)
    aliases: dict[str, str] = field(default_factory=dict)
    generations: list[list[str]] = field(default_factory=list)
    ranks: list[np.ndarray] = field(default_factory=list)
    stabilized_at: int | None = None
    max_order: int = 4
    _values: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    _by_name: dict[str, Member] = field(default_factory=dict, repr=False)

    # -- construction

    def _add(self, name: str, e: Expr, gen: int) -> bool:
        vals = evaluate_many([e], self.samples, self.theta.chart.env)[0]
        for m in self.members:
            mv = self._values[m.name]
            if np.all(close(vals, mv, self.tol)):
                self.aliases[name] = m.name
                return False
        mem = Member(name, e, gen)
        self.members.append(mem)
        self._by_name[name] = mem
        self._values[name] = vals
        return True

    def _grow(self) -> None:
        """Differentiate the newest generation."""
        r = len(self.generations)
        if r == 0:
            C = structure_functions(self.theta)
            new = [nm for ((k, i, j), e), nm in zip(C.items(), C.names()) if self._add(nm, e, 0)]
            self.generations.append(new)
            return
        new = []
        for nm in self.generations[-1]:
            for i, d in enumerate(coframe_derivative(self._by_name[nm].expr, self.theta)):
                child = f"{nm}|{i + 1}"
                if self._add(child, d, r):
                    new.append(child)
        self.generations.append(new)

    def ensure(self, order: int) -> None:
        """Compute generations 0..order+1 (the extra one supplies Jacobians)."""
        while len(self.generations) < order + 2:
            self._grow()

    # -- queries

    def resolve(self, name: str) -> str:
        if name in self._by_name:
            return name
        if name in self.aliases:
            return self.aliases[name]
        base, i = _split_name(name)
        if i is None:
            raise KeyError(f"unknown chain member {name!r}")
        parent = self.resolve(base)
        child = f"{parent}|{i}"
        if child != name:
            return self.resolve(child)
        self.ensure(self._by_name[parent].generation)
        if name in self._by_name:
            return name
        if name in self.aliases:
            return self.aliases[name]
        raise KeyError(f"unknown chain member {name!r}")

    def expr(self, name: str) -> Expr:
        return self._by_name[self.resolve(name)].expr

    def upto(self, order: int) -> list[Member]:
        """Distinct members of F_order, in generation-then-name order."""
        self.ensure(order)
        mem = [m for m in self.members if m.generation <= order]
        return sorted(mem, key=lambda m: (m.generation, m.name))

    def jacobian_exprs(self, members: Sequence[Member]) -> list[Expr]:
        """Row-major coframe-derivative entries X_i(f) for the given members."""
        n = self.theta.n
        if members:
            self.ensure(max(m.generation for m in members))
        return [self.expr(f"{m.name}|{i + 1}") for m in members for i in range(n)]

    def rank_at(self, points: Mapping[str, np.ndarray], order: int) -> np.ndarray:
        mem = self.upto(order)
        n = self.theta.n
        npts = np.asarray(next(iter(points.values()))).shape
        if not mem:
            return np.zeros(npts, dtype=int)
        vals = evaluate_many(self.jacobian_exprs(mem), points, self.theta.chart.env)
        mats = np.moveaxis(vals.reshape((len(mem), n) + npts), (0, 1), (-2, -1))
        return np.asarray(numeric_rank(mats))

    def full_names(self, order: int) -> list[str]:
        """Every name of the derivative tree up to ``order``, in canonical order."""
        n = self.theta.n
        gen = [entry_name(k, i, j, n) for k in range(n) for i in range(n) for j in range(i + 1, n)]
        out = list(gen)
        for _ in range(order):
            gen = [f"{g}|{i + 1}" for g in gen for i in range(n)]
            out.extend(gen)
        return out

    @property
    def order(self) -> int:
        return self.stabilized_at if self.stabilized_at is not None else self.max_order

    @property
    def rank(self) -> int:
        """Generic rank of the final generation over the sample set."""
        return int(np.max(self.ranks[self.order])) if self.ranks else 0

    def summary(self) -> dict:
        return {
            "generations": [len(self.upto(r)) for r in range(len(self.ranks))],
            "ranks": [sorted(set(int(x) for x in np.atleast_1d(r))) for r in self.ranks],
            "stabilized_at": self.stabilized_at,
            "rank": self.rank,
        }


def invariant_chain(theta: Coframe, max_order: int = 4, trials: int = DEFAULT_TRIALS,
                    seed: int = DEFAULT_SEED, tol: float = DEFAULT_TOL) -> InvariantChain:
    """Build F_0, F_1, ... until the Jacobian rank stops growing at every sample."""
    if max_order < 0:
        raise ValueError("max_order must be nonnegative")
    theta.check_nondegenerate(trials, seed)
    pts = theta.chart.sample(trials, seed)
    chain = InvariantChain(theta, pts, tol, max_order=max_order)
    chain.ranks.append(chain.rank_at(pts, 0))
    for r in range(max_order):
        chain.ranks.append(chain.rank_at(pts, r + 1))
        if np.array_equal(chain.ranks[r + 1], chain.ranks[r]):
            chain.stabilized_at = r
            break
    return chain


@dataclass
class RegularityReport:
    points: list[dict[str, float]]
    ranks: list[int]
    fully_regular: list[bool]
    cloud_ranks: list[list[int]]


def regularity_and_rank(chain: InvariantChain, points: Sequence[Mapping[str, float]], radius: float = 0.05,
                        cloud: int = 16, seed: int = DEFAULT_SEED) -> RegularityReport:
    if chain.stabilized_at is None:
        raise ChainNotStabilized(f"invariant chain did not stabilize within order {chain.max_order}")
    chart = chain.theta.chart
    order = chain.stabilized_at
    ranks, regular, clouds = [], [], []
    pts = []
    for p in points:
        p = chart.check_point(p)
        pts.append(p)
        r = int(chain.rank_at({c: np.array([v]) for c, v in p.items()}, order)[0])
        near = chart.sample_near(p, cloud, radius, seed)
        rc = sorted(set(int(x) for x in chain.rank_at(near, order)))
        ranks.append(r)
        clouds.append(rc)
        regular.append(rc == [r])
    return RegularityReport(pts, ranks, regular, clouds)


def select_independent_invariants(chain: InvariantChain, p: Mapping[str, float], radius: float = 0.05,
                                  seed: int = DEFAULT_SEED) -> list[str]:
    """Greedy scan of chain members keeping those that raise the Jacobian rank at p."""
    rep = regularity_and_rank(chain, [p], radius=radius, seed=seed)
    if not rep.fully_regular[0]:
        raise NotRegular(f"coframe is not fully regular at {rep.points[0]} (ranks nearby {rep.cloud_ranks[0]})")
    d = rep.ranks[0]
    pt = {c: np.array([v]) for c, v in rep.points[0].items()}
    n = chain.theta.n
    chosen: list[Member] = []
    rows: list[np.ndarray] = []
    for m in chain.upto(chain.stabilized_at):
        if len(chosen) == d:
            break
        row = evaluate_many(chain.jacobian_exprs([m]), pt, chain.theta.chart.env)[:, 0]
        trial = np.array(rows + [row]).reshape(-1, n)
        if numeric_rank(trial) > len(rows):
            chosen.append(m)
            rows.append(row)
    if len(chosen) != d:  # pragma: no cover - guarded by the rank computation
        raise NotRegular("greedy selection did not reach the chain rank")
    return [m.name for m in chosen]


def signature(theta: Coframe, p: Mapping[str, float], order: int,
              chain: InvariantChain | None = None) -> np.ndarray:
    """Values at p of every member of the derivative tree up to ``order``."""
    chain = chain or invariant_chain(theta, max_order=order)
    p = theta.chart.check_point(p)
    chain.ensure(order)
    names = chain.full_names(order)
    exprs = [chain.expr(nm) for nm in names]
    pt = {c: np.array([v]) for c, v in p.items()}
    return evaluate_many(exprs, pt, theta.chart.env)[:, 0]


# ---------------------------------------------------------------------------
# Cartan data


@dataclass
class CartanData:
    """Initial data (n, X, C, F) of a realization problem.

    ``C`` maps 0-based (k, i, j), i<j, to expressions on ``base`` and ``F`` maps
    (i, a) to the a-th component of the i-th anchor field.  Tabulated data
    (no closed forms) leaves ``C``/``F`` empty and keeps ``source`` so that
    values at a base point can be recovered by lifting to M.
    """

    n: int
    d: int
    names: list[str]
    base: Chart | None
    C: dict[tuple[int, int, int], Expr]
    F: dict[tuple[int, int], Expr]
    provenance: str
    invariants: list[Expr] = field(default_factory=list)
    source: "TabulatedSource | None" = None

    @property
    def closed_form(self) -> bool:
        return self.source is None


@dataclass
class TabulatedSource:
    """Samples of (h, C∘h, F∘h) on M, and a lift from base points back to M."""

    theta: Coframe
    h: list[Expr]
    C_on_M: dict[tuple[int, int, int], Expr]
    F_on_M: dict[tuple[int, int], Expr]
    points: np.ndarray  # (S, dim M)
    h_values: np.ndarray  # (S, d)
    C_values: np.ndarray  # (S, n, n, n) antisymmetric in the last two
    F_values: np.ndarray  # (S, n, d)

    def lift(self, x: Sequence[float], tol: float = 1e-11) -> dict[str, float]:
        """A point q of M with h(q) = x, by Gauss-Newton from the nearest sample."""
        x = np.asarray(x, dtype=float)
        if self.h_values.shape[1] == 0:
            return dict(zip(self.theta.chart.coords, self.points[0]))
        i = int(np.argmin(np.linalg.norm(self.h_values - x, axis=1)))
        q = project_to_level(self.theta, self.h, self.points[i], x, tol)
        if q is None:
            raise InconsistentData(f"no point of M maps to {x.tolist()} near the tabulated samples")
        return dict(zip(self.theta.chart.coords, q))

    def values_at(self, x: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        q = self.lift(x)
        return _data_at(self, q)


def _data_at(src: TabulatedSource, q: Mapping[str, float]) -> tuple[np.ndarray, np.ndarray]:
    n, d = src.theta.n, len(src.h)
    pt = {c: np.array([v]) for c, v in q.items()}
    keys_c = list(src.C_on_M)
    keys_f = list(src.F_on_M)
    vals = evaluate_many([src.C_on_M[k] for k in keys_c] + [src.F_on_M[k] for k in keys_f], pt,
                         src.theta.chart.env)[:, 0]
    C = np.zeros((n, n, n))
    for (k, i, j), v in zip(keys_c, vals[:len(keys_c)]):
        C[k, i, j], C[k, j, i] = v, -v
    F = np.zeros((n, d))
    for (i, a), v in zip(keys_f, vals[len(keys_c):]):
        F[i, a] = v
    return C, F


def _jacobian(theta: Coframe, h: Sequence[Expr]) -> list[Expr]:
    from .symbolic import diff

    return [diff(e, c) for e in h for c in theta.chart.coords]


def project_to_level(theta: Coframe, h: Sequence[Expr], start: np.ndarray, target: np.ndarray,
                     tol: float = 1e-11, iters: int = 40) -> np.ndarray | None:
    """Minimum-norm Gauss-Newton steps from ``start`` towards the level set h = target."""
    chart = theta.chart
    coords = chart.coords
    d, dim = len(h), chart.dim
    jac = _jacobian(theta, h)
    q = np.array(start, dtype=float)
    for _ in range(iters):
        pt = {c: np.array([v]) for c, v in zip(coords, q)}
        try:
            hv = evaluate_many(list(h), pt, chart.env)[:, 0]
        except Exception:
            return None
        res = hv - target
        if np.max(np.abs(res)) <= tol * (1 + np.max(np.abs(target))):
            return q if chart.contains(dict(zip(coords, q))) else None
        J = evaluate_many(jac, pt, chart.env)[:, 0].reshape(d, dim)
        q = q - np.linalg.lstsq(J, res, rcond=None)[0]
        if not chart.contains(dict(zip(coords, q)), constraints=False):
            return None
    return None


def derive_cartan_data(theta: Coframe, p: Mapping[str, float], closed_forms: Mapping | None = None,
                       max_order: int = 4, trials: int = DEFAULT_TRIALS, seed: int = DEFAULT_SEED,
                       tol: float = DEFAULT_TOL, chain: InvariantChain | None = None) -> CartanData:
    """Cartan data of a coframe near a fully regular point.

    ``closed_forms`` may carry ``base`` (a Chart), ``invariants`` (base coordinate
    name -> expression on M), ``C`` ((k, i, j) -> expression on the base) and
    ``F`` ((i, a) -> expression on the base).  These are verified by composing
    with h.  Without them, level-set constancy is checked numerically and the
    data is tabulated.
    """
    chain = chain or invariant_chain(theta, max_order=max_order, trials=trials, seed=seed, tol=tol)
    names = select_independent_invariants(chain, p, seed=seed)
    n, d = theta.n, len(names)
    Cm = structure_functions(theta)
    if closed_forms is not None:
        return _verify_closed_forms(theta, chain, names, Cm, closed_forms, trials, seed, tol)

    h = [chain.expr(nm) for nm in names]
    F_on_M = {}
    for a, e in enumerate(h):
        for i, de in enumerate(coframe_derivative(e, theta)):
            F_on_M[(i, a)] = de
    C_on_M = dict(Cm.table)
    rng = np.random.default_rng(seed)
    pts = theta.chart.sample_near(p, trials, 0.25 * _box_scale(theta.chart), rng)
    P = np.stack([pts[c] for c in theta.chart.coords], axis=1)
    tmp = TabulatedSource(theta, h, C_on_M, F_on_M, P, np.zeros((len(P), d)), np.zeros(0), np.zeros(0))
    Cs, Fs, Hs = [], [], []
    for q in P:
        qd = dict(zip(theta.chart.coords, q))
        C, F = _data_at(tmp, qd)
        Cs.append(C)
        Fs.append(F)
        Hs.append(evaluate_many(h, {c: np.array([v]) for c, v in qd.items()}, theta.chart.env)[:, 0]
                  if h else np.zeros(0))
    src = TabulatedSource(theta, h, C_on_M, F_on_M, P, np.array(Hs).reshape(len(P), d),
                          np.array(Cs), np.array(Fs))
    _check_level_sets(src, rng, tol)
    return CartanData(n, d, names, None, {}, {}, "tabulated", h, src)


def _box_scale(chart: Chart) -> float:
    return float(min(hi - lo for lo, hi in chart.intervals))


def _check_level_sets(src: TabulatedSource, rng: np.random.Generator, tol: float, pairs: int = 16) -> None:
    """Project random samples onto the level set of another sample and compare data there."""
    S = len(src.points)
    checked = 0
    for _ in range(4 * pairs):
        if checked >= pairs:
            break
        a, b = rng.choice(S, size=2, replace=False)
        q = project_to_level(src.theta, src.h, src.points[b], src.h_values[a]) if src.h else src.points[b]
        if q is None:
            continue
        C, F = _data_at(src, dict(zip(src.theta.chart.coords, q)))
        ok_c = np.all(close(C, src.C_values[a], 1e3 * tol))
        ok_f = np.all(close(F, src.F_values[a], 1e3 * tol))
        if not (ok_c and ok_f):
            raise InconsistentData("structure data is not constant on a level set of the selected invariants")
        checked += 1


def _verify_closed_forms(theta, chain, names, Cm, cf, trials, seed, tol) -> CartanData:
    base: Chart = cf["base"]
    inv: Mapping[str, Expr] = cf["invariants"]
    if tuple(inv) != base.coords:
        raise ValueError(f"closed forms must define every base coordinate {base.coords} in order")
    d = len(names)
    if len(base.coords) != d:
        raise InconsistentData(f"closed forms use {len(base.coords)} invariants but the chain rank is {d}")
    n = theta.n
    h = [inv[c] for c in base.coords]
    comp = dict(zip(base.coords, h))
    C = {k: normalize(v, base.rules) for k, v in cf.get("C", {}).items()}
    F = {k: normalize(v, base.rules) for k, v in cf.get("F", {}).items()}
    lhs, rhs, labels = [], [], []
    for key, e in Cm.items():
        lhs.append(e)
        rhs.append(subs(C.get(key, ZERO), comp))
        labels.append(entry_name(*key, n))
    for a, e in enumerate(h):
        for i, de in enumerate(coframe_derivative(e, theta)):
            lhs.append(de)
            rhs.append(subs(F.get((i, a), ZERO), comp))
            labels.append(f"F{i + 1}^{base.coords[a]}")
    pts = theta.chart.sample(trials, seed)
    env = theta.chart.env.merged(base.env)
    lv = evaluate_many(lhs, pts, env)
    rv = evaluate_many(rhs, pts, env)
    ok = close(lv, rv, tol)
    if not np.all(ok):
        bad = [labels[i] for i in range(len(labels)) if not np.all(ok[i])]
        raise InconsistentData(f"closed forms disagree with the coframe data: {', '.join(bad)}")
    # the user invariants must be functionally independent with the chain rank
    from .symbolic import diff

    jac = evaluate_many([diff(e, c) for e in h for c in theta.chart.coords], pts, env)
    jac = np.moveaxis(jac.reshape(d, theta.chart.dim, -1), -1, 0)
    if d and np.any(numeric_rank(jac) != d):
        raise InconsistentData("declared invariants are not independent on the sample set")
    return CartanData(n, d, list(names), base, C, F, "closed-form", h)
