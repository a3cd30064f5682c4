"""Trivialized Lie algebroids: structure equations, isotropy, d_A and the modular cocycle."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Mapping, Sequence

import numpy as np

from .coframe import CartanData, TabulatedSource
from .forms import VectorField, sort_sign
from .linalg import kernel_basis, numeric_rank
from .symbolic import (
    DEFAULT_SEED, DEFAULT_TRIALS, ONE, ZERO, Chart, Expr, add, diff, evaluate_many, log, mul, neg,
    normalize, power, sample_values, sub,
)

AXIOM_TOL = 1e-7


class AxiomError(ValueError):
    def __init__(self, message: str, report: "AxiomReport"):
        super().__init__(message)
        self.report = report


class BracketNotClosed(ValueError):
    pass


@dataclass(eq=False)
class TrivializedAlgebroid:
    """X x R^n with [e_i, e_j] = sum_k B^k_ij e_k and anchor(e_i) = sum_a F_i^a d/dx_a.

    ``B`` is keyed by 0-based (k, i, j) with i<j, ``F`` by (i, a).  A tabulated
    algebroid has empty tables and answers numeric queries through ``source``.
    """

    base: Chart
    n: int
    B: Mapping[tuple[int, int, int], Expr]
    F: Mapping[tuple[int, int], Expr]
    name: str = "A"
    source: TabulatedSource | None = None
    d_override: int | None = None
    axioms: "AxiomReport | None" = None

    def __post_init__(self):
        for (k, i, j) in self.B:
            if not i < j:
                raise ValueError(f"algebroid {self.name}: bracket entries must have i<j, got ({i + 1},{j + 1})")
            if not (0 <= k < self.n and 0 <= j < self.n):
                raise ValueError(f"algebroid {self.name}: bracket index out of range")
        for (i, a) in self.F:
            if not (0 <= i < self.n and 0 <= a < self.d):
                raise ValueError(f"algebroid {self.name}: anchor index out of range")
        rules = self.base.rules
        self.B = {k: v for k, v in ((k, normalize(v, rules)) for k, v in self.B.items()) if not v.is_zero}
        self.F = {k: v for k, v in ((k, normalize(v, rules)) for k, v in self.F.items()) if not v.is_zero}

    @property
    def d(self) -> int:
        return self.d_override if self.d_override is not None else self.base.dim

    @property
    def tabulated(self) -> bool:
        return self.source is not None

    def b(self, k: int, i: int, j: int) -> Expr:
        if i == j:
            return ZERO
        if i < j:
            return self.B.get((k, i, j), ZERO)
        return neg(self.B.get((k, j, i), ZERO))

    def anchor(self, i: int) -> VectorField:
        return VectorField(self.base, tuple(self.F.get((i, a), ZERO) for a in range(self.d)))

    # numeric values at a base point
    def values_at(self, x: Mapping[str, float] | Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        """(B[k, i, j], R[a, i]) at x; R is the d x n anchor matrix."""
        n, d = self.n, self.d
        if isinstance(x, Mapping):
            xv = [float(x[c]) for c in self.base.coords]
        else:
            xv = [float(v) for v in x]
        if self.source is not None:
            C, F = self.source.values_at(xv)
            return -C, F.T.copy()
        pt = {c: np.array([v]) for c, v in zip(self.base.coords, xv)}
        bk = list(self.B)
        fk = list(self.F)
        vals = evaluate_many([self.B[k] for k in bk] + [self.F[k] for k in fk], pt, self.base.env)
        vals = vals.reshape(len(bk) + len(fk))
        Bn = np.zeros((n, n, n))
        for (k, i, j), v in zip(bk, vals[:len(bk)]):
            Bn[k, i, j], Bn[k, j, i] = v, -v
        R = np.zeros((d, n))
        for (i, a), v in zip(fk, vals[len(bk):]):
            R[a, i] = v
        return Bn, R


def lie_algebra(n: int, brackets: Mapping[tuple[int, int, int], Expr | int], name: str = "g") -> TrivializedAlgebroid:
    """A Lie algebra as an algebroid over a point."""
    from .symbolic import as_expr

    point = Chart(f"{name}_base", (), ())
    return TrivializedAlgebroid(point, n, {k: as_expr(v) for k, v in brackets.items()}, {}, name=name)


# ---------------------------------------------------------------------------
# structure equations


@dataclass
class AxiomReport:
    bracket_residual: float
    jacobi_residual: float
    tol: float
    samples: int
    seed: int
    method: str
    worst: str = ""

    @property
    def passed(self) -> bool:
        return self.bracket_residual <= self.tol and self.jacobi_residual <= self.tol

    def as_dict(self) -> dict:
        return {
            "bracket_residual": self.bracket_residual, "jacobi_residual": self.jacobi_residual,
            "tol": self.tol, "samples": self.samples, "seed": self.seed, "method": self.method,
            "pass": self.passed, "worst": self.worst,
        }


def _context(A: TrivializedAlgebroid):
    """Symbolic B, anchor action, and sampling chart; tabulated data is pulled back to M."""
    n, d = A.n, A.d
    if A.source is None:
        fields = [A.anchor(i) for i in range(n)]
        B = {key: A.b(*key) for key in ((k, i, j) for k in range(n) for i in range(n) for j in range(n))}
        F = {(i, a): A.F.get((i, a), ZERO) for i in range(n) for a in range(d)}
        return A.base, B, F, [f.apply for f in fields], "symbolic"
    src = A.source
    theta = src.theta
    B = {}
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if i < j:
                    B[(k, i, j)] = neg(src.C_on_M.get((k, i, j), ZERO))
                elif i > j:
                    B[(k, i, j)] = src.C_on_M.get((k, j, i), ZERO)
                else:
                    B[(k, i, j)] = ZERO
    F = {(i, a): src.F_on_M.get((i, a), ZERO) for i in range(n) for a in range(d)}
    return theta.chart, B, F, [x.apply for x in theta.dual_fields], "pullback"


def structure_equation_exprs(A: TrivializedAlgebroid) -> tuple[list[tuple[str, Expr]], list[tuple[str, Expr]], Chart, str]:
    chart, B, F, act, method = _context(A)
    n, d = A.n, A.d
    rules = chart.rules
    eq5 = []
    for i in range(n):
        for j in range(i + 1, n):
            for a in range(d):
                terms = [act[i](F[(j, a)]), neg(act[j](F[(i, a)]))]
                terms += [neg(mul(B[(k, i, j)], F[(k, a)])) for k in range(n)]
                eq5.append((f"[F{i + 1},F{j + 1}]^{a + 1}", normalize(add(*terms), rules)))
    eq6 = []
    for i in range(n):
        for j, k, l in combinations(range(n), 3):
            terms = [act[j](B[(i, k, l)]), act[k](B[(i, l, j)]), act[l](B[(i, j, k)])]
            for m in range(n):
                terms.append(mul(B[(m, k, l)], B[(i, j, m)]))
                terms.append(mul(B[(m, l, j)], B[(i, k, m)]))
                terms.append(mul(B[(m, j, k)], B[(i, l, m)]))
            eq6.append((f"jacobi^{i + 1}_{j + 1}{k + 1}{l + 1}", normalize(add(*terms), rules)))
    return eq5, eq6, chart, method


def check_structure_equations(A: TrivializedAlgebroid, tol: float = AXIOM_TOL, trials: int = DEFAULT_TRIALS,
                              seed: int = DEFAULT_SEED) -> AxiomReport:
    """Max residuals of [F_i,F_j] = sum B^k_ij F_k and of the Jacobi-type identity."""
    eq5, eq6, chart, method = structure_equation_exprs(A)
    worst, worst_val = "", -1.0
    res = []
    for group in (eq5, eq6):
        exprs = [e for _, e in group if not e.is_zero]
        labels = [l for l, e in group if not e.is_zero]
        if not exprs:
            res.append(0.0)
            continue
        vals = np.abs(sample_values(exprs, chart, trials, seed))
        per = vals.max(axis=1)
        res.append(float(per.max()))
        if per.max() > worst_val:
            worst_val, worst = float(per.max()), labels[int(np.argmax(per))]
    samples = trials if chart.dim else 1
    return AxiomReport(res[0], res[1], tol, samples, seed, method, worst)


def from_cartan_data(cd: CartanData, tol: float = AXIOM_TOL, trials: int = DEFAULT_TRIALS,
                     seed: int = DEFAULT_SEED, name: str = "A") -> TrivializedAlgebroid:
    """Classifying algebroid: B = -C, anchor F; raises AxiomError if the axioms fail."""
    if cd.closed_form:
        base = cd.base if cd.base is not None else Chart(f"{name}_base", (), ())
        B = {k: neg(v) for k, v in cd.C.items()}
        A = TrivializedAlgebroid(base, cd.n, B, dict(cd.F), name=name)
    else:
        lo = cd.source.h_values.min(axis=0) if cd.d else []
        hi = cd.source.h_values.max(axis=0) if cd.d else []
        base = Chart(f"{name}_base", tuple(f"x{a + 1}" for a in range(cd.d)),
                     tuple((float(l), float(h) + 1e-12) for l, h in zip(lo, hi)))
        A = TrivializedAlgebroid(base, cd.n, {}, {}, name=name, source=cd.source)
    rep = check_structure_equations(A, tol, trials, seed)
    A.axioms = rep
    if not rep.passed:
        raise AxiomError(f"data is not a Lie algebroid: residual {max(rep.bracket_residual, rep.jacobi_residual):.3g}"
                         f" above {tol:g} ({rep.worst})", rep)
    return A


# ---------------------------------------------------------------------------
# orbits and isotropy


@dataclass
class IsotropyAlgebra:
    x: tuple[float, ...]
    dimension: int
    basis: np.ndarray  # n x m, columns span ker(anchor)
    structure: np.ndarray  # s[k, i, j]: [b_i, b_j] = sum_k s[k, i, j] b_k
    killing: np.ndarray
    closure_residual: float

    def jacobi_residual(self) -> float:
        s = self.structure
        m = self.dimension
        worst = 0.0
        for i in range(m):
            for j in range(m):
                for k in range(m):
                    # [b_i,[b_j,b_k]] + cyclic
                    v = (s[:, i, :] @ s[:, j, k] + s[:, j, :] @ s[:, k, i] + s[:, k, :] @ s[:, i, j])
                    worst = max(worst, float(np.max(np.abs(v))) if m else 0.0)
        return worst


@dataclass
class OrbitIsotropy:
    orbit_dim: int
    symmetry_dim: int
    isotropy: IsotropyAlgebra


def orbit_and_isotropy(A: TrivializedAlgebroid, x: Mapping[str, float] | Sequence[float],
                       tol: float = 1e-8) -> OrbitIsotropy:
    if isinstance(x, Mapping):
        missing = [c for c in A.base.coords if c not in x]
        if missing:
            raise ValueError(f"base point is missing coordinates {missing}")
        xv = tuple(float(x[c]) for c in A.base.coords)
    else:
        xv = tuple(float(v) for v in x)
    Bn, R = A.values_at(xv)
    orbit = numeric_rank(R) if R.size else 0
    K = kernel_basis(R) if R.size else np.eye(A.n)
    m = K.shape[1]
    s = np.zeros((m, m, m))
    worst = 0.0
    for i in range(m):
        for j in range(m):
            w = np.einsum("kab,a,b->k", Bn, K[:, i], K[:, j])
            c = K.T @ w
            worst = max(worst, float(np.linalg.norm(w - K @ c)))
            s[:, i, j] = c
    scale = max(1.0, float(np.max(np.abs(Bn))) if Bn.size else 1.0)
    if worst > tol * scale:
        raise BracketNotClosed(f"bracket does not close on the isotropy at {xv} (defect {worst:.3g})")
    killing = np.einsum("kil,ljk->ij", s, s) if m else np.zeros((0, 0))
    iso = IsotropyAlgebra(xv, m, K, s, killing, worst)
    return OrbitIsotropy(int(orbit), A.n - int(orbit), iso)


def classify_isotropy_3d(iso: IsotropyAlgebra, rtol: float = 1e-8) -> str:
    """so3 / sl2 / se2 / other, from the Killing form and the derived algebra."""
    if iso.dimension != 3:
        raise ValueError(f"isotropy algebra has dimension {iso.dimension}, expected 3")
    ev = np.linalg.eigvalsh((iso.killing + iso.killing.T) / 2)
    scale = max(float(np.max(np.abs(ev))), 1e-300)
    zero = np.abs(ev) <= rtol * scale if np.max(np.abs(ev)) > 1e-12 else np.ones(3, dtype=bool)
    if not np.any(zero):
        return "so3" if np.all(ev < 0) else "sl2"
    s = iso.structure
    derived = np.array([s[:, i, j] for i in range(3) for j in range(i + 1, 3)]).T
    r = numeric_rank(derived)
    if r != 2:
        return "other"
    u, _, _ = np.linalg.svd(derived)
    D = u[:, :2]
    w = np.einsum("kab,a,b->k", s, D[:, 0], D[:, 1])
    return "se2" if np.linalg.norm(w) <= rtol * max(1.0, float(np.max(np.abs(s)))) else "other"


# ---------------------------------------------------------------------------
# A-forms


@dataclass(eq=False)
class AlgebroidForm:
    """Degree-k section of the dual exterior bundle, coefficients per increasing fiber index."""

    algebroid: TrivializedAlgebroid
    degree: int
    coeffs: Mapping[tuple[int, ...], Expr] = field(default_factory=dict)

    def __post_init__(self):
        n = self.algebroid.n
        if not 0 <= self.degree <= n:
            raise ValueError(f"degree {self.degree} exceeds fiber dimension {n}")
        rules = self.algebroid.base.rules
        out = {}
        for k, v in self.coeffs.items():
            k = tuple(k)
            if len(k) != self.degree or list(k) != sorted(set(k)) or any(not 0 <= i < n for i in k):
                raise ValueError(f"invalid fiber multi-index {k}")
            v = normalize(v, rules)
            if not v.is_zero:
                out[k] = v
        self.coeffs = dict(sorted(out.items()))

    def value(self, idx: Sequence[int]) -> Expr:
        sign, key = sort_sign(idx)
        if sign == 0:
            return ZERO
        c = self.coeffs.get(key, ZERO)
        return c if sign > 0 else neg(c)

    def __add__(self, other: "AlgebroidForm") -> "AlgebroidForm":
        keys = set(self.coeffs) | set(other.coeffs)
        return AlgebroidForm(self.algebroid, self.degree,
                             {k: add(self.coeffs.get(k, ZERO), other.coeffs.get(k, ZERO)) for k in keys})

    def __sub__(self, other: "AlgebroidForm") -> "AlgebroidForm":
        keys = set(self.coeffs) | set(other.coeffs)
        return AlgebroidForm(self.algebroid, self.degree,
                             {k: sub(self.coeffs.get(k, ZERO), other.coeffs.get(k, ZERO)) for k in keys})

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    def max_abs(self, trials: int = DEFAULT_TRIALS, seed: int = DEFAULT_SEED) -> float:
        """Largest |coefficient| over the base sample set."""
        if not self.coeffs:
            return 0.0
        vals = sample_values(list(self.coeffs.values()), self.algebroid.base, trials, seed)
        return float(np.max(np.abs(vals)))


def algebroid_differential(w: AlgebroidForm) -> AlgebroidForm:
    """Chevalley-Eilenberg differential with the anchor acting on coefficients.

    (d w)(e_0..e_k) = sum_p (-1)^p F_p(w(..^p..)) + sum_{p<q} (-1)^{p+q} w([e_p,e_q], ..^p..^q..)
    """
    A = w.algebroid
    if A.tabulated:
        raise ValueError("d_A needs closed-form algebroid data")
    n, k = A.n, w.degree
    if k >= n:
        raise ValueError("d_A of a top-degree form")
    act = [A.anchor(i).apply for i in range(n)]
    out = {}
    for I in combinations(range(n), k + 1):
        terms = []
        for p, ip in enumerate(I):
            rest = I[:p] + I[p + 1:]
            t = act[ip](w.value(rest))
            terms.append(t if p % 2 == 0 else neg(t))
        for p in range(k + 1):
            for q in range(p + 1, k + 1):
                rest = tuple(x for r, x in enumerate(I) if r not in (p, q))
                sign = -1 if (p + q) % 2 else 1
                for m in range(n):
                    bm = A.b(m, I[p], I[q])
                    if bm.is_zero:
                        continue
                    t = mul(bm, w.value((m,) + rest))
                    terms.append(t if sign > 0 else neg(t))
        out[I] = add(*terms)
    return AlgebroidForm(A, k + 1, out)


def function_form(A: TrivializedAlgebroid, f: Expr) -> AlgebroidForm:
    return AlgebroidForm(A, 0, {(): f})


def modular_cocycle(A: TrivializedAlgebroid, density: Expr | None = None) -> AlgebroidForm:
    """Modular cocycle of the section mu = (e_1^...^e_n) (x) (f dx_1^...^dx_d).

    The flat connection nabla_a(w (x) v) = L_a w (x) v + w (x) L_{rho(a)} v gives
    nabla_{e_i} mu = c(e_i) mu with
      c(e_i) = sum_k B^k_ik + (1/f) sum_a d(f F_i^a)/dx_a
    where the first sum is the trace of [e_i, .] (from L_{e_i} of the top
    fiber form) and the second the divergence of f times the anchor field.
    """
    if A.tabulated:
        raise ValueError("the modular cocycle needs closed-form algebroid data")
    f = ONE if density is None else density
    inv_f = power(f, -1)
    coeffs = {}
    for i in range(A.n):
        tr = add(*(A.b(k, i, k) for k in range(A.n)))
        div = add(*(diff(mul(f, A.F.get((i, a), ZERO)), x) for a, x in enumerate(A.base.coords)))
        coeffs[(i,)] = add(tr, mul(inv_f, div))
    return AlgebroidForm(A, 1, coeffs)


def log_form(A: TrivializedAlgebroid, f: Expr) -> AlgebroidForm:
    return algebroid_differential(function_form(A, log(f)))


def random_form(A: TrivializedAlgebroid, degree: int, rng: np.random.Generator,
                make: Callable[[np.random.Generator], Expr]) -> AlgebroidForm:
    return AlgebroidForm(A, degree, {I: make(rng) for I in combinations(range(A.n), degree)})
