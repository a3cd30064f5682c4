"""Differential forms and vector fields on a single chart."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Mapping, Sequence

from .symbolic import ONE, ZERO, Chart, Expr, add, as_expr, diff, mul, neg, normalize
from .symbolic.printer import to_str

MultiIndex = tuple[int, ...]


class ChartMismatch(ValueError):
    pass


def sort_sign(idx: Sequence[int]) -> tuple[int, MultiIndex]:
    """Sign of the permutation sorting ``idx`` (0 if an index repeats) and the sorted index."""
    idx = list(idx)
    if len(set(idx)) != len(idx):
        return 0, ()
    sign = 1
    for i in range(len(idx)):
        for j in range(len(idx) - 1 - i):
            if idx[j] > idx[j + 1]:
                idx[j], idx[j + 1] = idx[j + 1], idx[j]
                sign = -sign
    return sign, tuple(idx)


def _clean(coeffs: Mapping[MultiIndex, Expr], rules=()) -> dict[MultiIndex, Expr]:
    out = {}
    for k in sorted(coeffs):
        v = normalize(coeffs[k], rules) if rules else coeffs[k]
        if not v.is_zero:
            out[k] = v
    return out


@dataclass(frozen=True, eq=False)
class DifferentialForm:
    chart: Chart
    degree: int
    coeffs: Mapping[MultiIndex, Expr]

    def __post_init__(self):
        if not 0 <= self.degree <= self.chart.dim:
            raise ValueError(f"degree {self.degree} exceeds chart dimension {self.chart.dim}")
        for k in self.coeffs:
            if len(k) != self.degree or list(k) != sorted(set(k)) or (k and not 0 <= k[0] <= k[-1] < self.chart.dim):
                raise ValueError(f"invalid multi-index {k} for a {self.degree}-form")
        object.__setattr__(self, "coeffs", _clean(self.coeffs, self.chart.rules))

    @classmethod
    def zero(cls, chart: Chart, degree: int) -> "DifferentialForm":
        return cls(chart, degree, {})

    @classmethod
    def function(cls, chart: Chart, f) -> "DifferentialForm":
        return cls(chart, 0, {(): as_expr(f)})

    @classmethod
    def differential(cls, chart: Chart, coord: str) -> "DifferentialForm":
        return cls(chart, 1, {(chart.coords.index(coord),): ONE})

    @classmethod
    def one_form(cls, chart: Chart, components: Sequence) -> "DifferentialForm":
        return cls(chart, 1, {(i,): as_expr(c) for i, c in enumerate(components)})

    def coefficient(self, idx: Sequence[int]) -> Expr:
        sign, key = sort_sign(idx)
        if sign == 0:
            return ZERO
        c = self.coeffs.get(key, ZERO)
        return c if sign == 1 else neg(c)

    def components(self) -> list[Expr]:
        """Dense coefficient list for a 1-form."""
        if self.degree != 1:
            raise ValueError("components() is defined for 1-forms")
        return [self.coeffs.get((i,), ZERO) for i in range(self.chart.dim)]

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    def __eq__(self, other):
        if not isinstance(other, DifferentialForm):
            return NotImplemented
        return self.chart == other.chart and self.degree == other.degree and dict(self.coeffs) == dict(other.coeffs)

    def __hash__(self):
        return hash((self.degree, tuple(sorted(self.coeffs.items()))))

    def _check(self, other: "DifferentialForm"):
        if self.chart != other.chart:
            raise ChartMismatch(f"forms live on different charts ({self.chart.name}, {other.chart.name})")

    def __add__(self, other: "DifferentialForm") -> "DifferentialForm":
        self._check(other)
        if self.degree != other.degree:
            raise ValueError("cannot add forms of different degree")
        keys = set(self.coeffs) | set(other.coeffs)
        return DifferentialForm(self.chart, self.degree, {
            k: add(self.coeffs.get(k, ZERO), other.coeffs.get(k, ZERO)) for k in keys})

    def __neg__(self) -> "DifferentialForm":
        return self.scale(-1)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, f) -> "DifferentialForm":
        f = as_expr(f)
        return DifferentialForm(self.chart, self.degree, {k: mul(f, v) for k, v in self.coeffs.items()})

    def __str__(self) -> str:
        if not self.coeffs:
            return "0"
        parts = []
        for k, v in self.coeffs.items():
            basis = "^^".join(f"d[{self.chart.coords[i]}]" for i in k)
            s = to_str(v)
            if not k:
                parts.append(s)
            else:
                parts.append(basis if s == "1" else f"({s})*{basis}")
        return " + ".join(parts)


def wedge(a: DifferentialForm, b: DifferentialForm) -> DifferentialForm:
    """Graded-antisymmetric product."""
    a._check(b)
    deg = a.degree + b.degree
    if deg > a.chart.dim:
        raise ValueError(f"wedge of degrees {a.degree}+{b.degree} exceeds chart dimension {a.chart.dim}")
    acc: dict[MultiIndex, list[Expr]] = {}
    for ka, va in a.coeffs.items():
        for kb, vb in b.coeffs.items():
            sign, key = sort_sign(ka + kb)
            if sign == 0:
                continue
            term = mul(va, vb)
            acc.setdefault(key, []).append(term if sign > 0 else neg(term))
    return DifferentialForm(a.chart, deg, {k: add(*v) for k, v in acc.items()})


def exterior_derivative(a: DifferentialForm) -> DifferentialForm:
    """Coordinate exterior derivative."""
    n = a.chart.dim
    if a.degree >= n:
        raise ValueError("exterior derivative of a top-degree form")
    acc: dict[MultiIndex, list[Expr]] = {}
    for k, v in a.coeffs.items():
        for mu, c in enumerate(a.chart.coords):
            if mu in k:
                continue
            dv = diff(v, c)
            if dv.is_zero:
                continue
            sign, key = sort_sign((mu,) + k)
            acc.setdefault(key, []).append(dv if sign > 0 else neg(dv))
    return DifferentialForm(a.chart, a.degree + 1, {k: add(*v) for k, v in acc.items()})


d = exterior_derivative


@dataclass(frozen=True, eq=False)
class VectorField:
    chart: Chart
    components: tuple[Expr, ...]

    def __post_init__(self):
        comps = tuple(normalize(as_expr(c), self.chart.rules) for c in self.components)
        if len(comps) != self.chart.dim:
            raise ValueError(f"vector field needs {self.chart.dim} components, got {len(comps)}")
        object.__setattr__(self, "components", comps)

    def apply(self, f: Expr) -> Expr:
        """Directional derivative v(f)."""
        return add(*(mul(c, diff(f, x)) for c, x in zip(self.components, self.chart.coords) if not c.is_zero))

    def __eq__(self, other):
        return isinstance(other, VectorField) and self.chart == other.chart and self.components == other.components

    def __hash__(self):
        return hash(self.components)

    @property
    def is_zero(self) -> bool:
        return all(c.is_zero for c in self.components)

    def __str__(self) -> str:
        terms = [f"({to_str(c)})*D[{x}]" for c, x in zip(self.components, self.chart.coords) if not c.is_zero]
        return " + ".join(terms) or "0"


def lie_bracket_fields(v: VectorField, w: VectorField) -> VectorField:
    if v.chart != w.chart:
        raise ChartMismatch("vector fields live on different charts")
    comps = [add(v.apply(wc), neg(w.apply(vc))) for vc, wc in zip(v.components, w.components)]
    return VectorField(v.chart, tuple(comps))


def interior(v: VectorField, a: DifferentialForm) -> DifferentialForm:
    """Contraction i_v a."""
    if a.degree == 0:
        raise ValueError("cannot contract a function")
    acc: dict[MultiIndex, list[Expr]] = {}
    for k, c in a.coeffs.items():
        for pos, mu in enumerate(k):
            vc = v.components[mu]
            if vc.is_zero:
                continue
            rest = k[:pos] + k[pos + 1:]
            term = mul(vc, c)
            acc.setdefault(rest, []).append(term if pos % 2 == 0 else neg(term))
    return DifferentialForm(a.chart, a.degree - 1, {k: add(*v) for k, v in acc.items()})


def evaluate_on(a: DifferentialForm, fields: Sequence[VectorField]) -> Expr:
    """a(v1, ..., vk) with the determinant convention (dx∧dy)(∂x, ∂y) = 1."""
    if len(fields) != a.degree:
        raise ValueError("need one vector field per degree")
    out = a
    for v in fields:
        out = interior(v, out)
    return out.coeffs.get((), ZERO)


# ---------------------------------------------------------------------------
# symbolic linear algebra


def determinant(m: Sequence[Sequence[Expr]]) -> Expr:
    """Division-free Laplace expansion with memoized minors."""
    n = len(m)

    @lru_cache(maxsize=None)
    def minor(row: int, cols: tuple[int, ...]) -> Expr:
        if row == n:
            return ONE
        terms = []
        for pos, c in enumerate(cols):
            entry = m[row][c]
            if entry.is_zero:
                continue
            sub_det = minor(row + 1, cols[:pos] + cols[pos + 1:])
            if sub_det.is_zero:
                continue
            t = mul(entry, sub_det)
            terms.append(t if pos % 2 == 0 else neg(t))
        return add(*terms)

    return minor(0, tuple(range(n)))


MAX_SYMBOLIC_DIM = 6


def inverse(m: Sequence[Sequence[Expr]], rules=()) -> tuple[list[list[Expr]], Expr]:
    """Adjugate over determinant; returns (inverse, determinant)."""
    n = len(m)
    if n > MAX_SYMBOLIC_DIM:
        raise ValueError(f"symbolic inversion is limited to dimension {MAX_SYMBOLIC_DIM}")
    det = normalize(determinant(m), rules)
    if det.is_zero:
        raise ZeroDivisionError("matrix is symbolically singular")
    inv_det = det ** -1
    inv = [[ZERO] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            sub_m = [[m[r][c] for c in range(n) if c != j] for r in range(n) if r != i]
            cof = determinant(sub_m) if n > 1 else ONE
            if (i + j) % 2:
                cof = neg(cof)
            inv[j][i] = normalize(mul(cof, inv_det), rules)
    return inv, det


def minor_det(m: Sequence[Sequence[Expr]], rows: Sequence[int], cols: Sequence[int]) -> Expr:
    return determinant([[m[r][c] for c in cols] for r in rows])


def expand_in_basis(a: DifferentialForm, inv: Sequence[Sequence[Expr]]) -> dict[MultiIndex, Expr]:
    """Coefficients of ``a`` in the basis θ^I, where dx^μ = Σ_i inv[μ][i] θ^i."""
    n = a.chart.dim
    k = a.degree
    if k == 0:
        return {(): a.coeffs.get((), ZERO)}
    out: dict[MultiIndex, Expr] = {}
    for I in combinations(range(n), k):
        terms = []
        for J, cJ in a.coeffs.items():
            m = minor_det(inv, J, I)
            if not m.is_zero:
                terms.append(mul(cJ, m))
        val = normalize(add(*terms), a.chart.rules)
        if not val.is_zero:
            out[I] = val
    return out


def combine_in_basis(coeffs: Mapping[MultiIndex, Expr], basis: Sequence[DifferentialForm], chart: Chart,
                     degree: int) -> DifferentialForm:
    """Σ_I c_I θ^I back in coordinates."""
    total = DifferentialForm.zero(chart, degree)
    for I, c in coeffs.items():
        if degree == 0:
            term = DifferentialForm.function(chart, c)
        else:
            term = basis[I[0]]
            for i in I[1:]:
                term = wedge(term, basis[i])
            term = term.scale(c)
        total = total + term
    return total
