"""Name resolution: syntax tree -> ProblemSpec with geometric objects."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from ..algebroid import TrivializedAlgebroid
from ..coframe import Coframe
from ..flow import FormSystem, PathSpec
from ..forms import DifferentialForm, wedge
from ..realization import Realization
from ..symbolic import (
    ONE, ZERO, Chart, Const, Constraint, Environment, Expr, ExprBinding, ODEBinding, RewriteRule, Sym, add,
    evaluate, free_symbols, func, mul, neg, power,
)
from ..symbolic.expr import apply_fn
from ..symbolic.evaluate import EvaluationError
from .syntax import (
    AlgebroidDecl, Assign, Basis, Binary, Call, ChartDecl, CoframeDecl, Curve, Diagnostic, Document, Expect,
    FunctionDecl, Name, Node, Num, Parser, PatVar, PointLit, ProblemError, RealizationDecl, RuleDecl, Span, TaskDecl,
    Tuple_, Unary, Waypoints, parse_document,
)

ELEMENTARY_ARITY = {"sin": 1, "cos": 1, "tan": 1, "exp": 1, "log": 1, "sqrt": 1, "atan2": 2}
MAX_EXPONENT = 64
RESERVED = {"pi", "d", "D", "e"}


class _Fail(Exception):
    def __init__(self, span: Span, message: str):
        super().__init__(message)
        self.span = span
        self.message = message


# ---------------------------------------------------------------------------
# typed values produced by the expression evaluator


@dataclass
class _Form:
    form: DifferentialForm


@dataclass
class _Section:
    comps: dict[int, Expr]


@dataclass
class _Field:
    comps: dict[int, Expr]


@dataclass
class Scope:
    symbols: set[str] = field(default_factory=set)
    functions: Mapping[str, int] = field(default_factory=dict)
    chart: Chart | None = None  # enables d[x]
    forms: Mapping[str, DifferentialForm] = field(default_factory=dict)
    base_coords: tuple[str, ...] | None = None  # enables D[x]
    rank: int | None = None  # enables e[k]
    patterns: bool = False
    any_symbol: bool = False


def _kind(v) -> str:
    if isinstance(v, Expr):
        return "scalar"
    if isinstance(v, _Form):
        return f"{v.form.degree}-form"
    if isinstance(v, _Section):
        return "section"
    return "vector field"


def _scale(v, s: Expr):
    if isinstance(v, Expr):
        return mul(v, s)
    if isinstance(v, _Form):
        return _Form(v.form.scale(s))
    comps = {k: mul(c, s) for k, c in v.comps.items()}
    return type(v)(comps)


def _combine(a, b, span: Span, sign: int):
    ka, kb = _kind(a), _kind(b)
    if ka != kb:
        raise _Fail(span, f"cannot add a {ka} and a {kb}")
    if isinstance(a, Expr):
        return add(a, b if sign > 0 else neg(b))
    if isinstance(a, _Form):
        return _Form(a.form + (b.form if sign > 0 else -b.form))
    comps = dict(a.comps)
    for k, c in b.comps.items():
        comps[k] = add(comps.get(k, ZERO), c if sign > 0 else neg(c))
    return type(a)(comps)


def to_value(node: Node, scope: Scope):
    if isinstance(node, Num):
        return Const(node.value)
    if isinstance(node, Name):
        n = node.name
        if n in scope.forms:
            return _Form(scope.forms[n])
        if n == "pi" or n in scope.symbols or (scope.any_symbol and n not in scope.functions):
            return Sym(n)
        if n in scope.functions or n in ELEMENTARY_ARITY:
            raise _Fail(node.span, f"function {n!r} used without arguments")
        raise _Fail(node.span, f"unknown symbol {n!r}")
    if isinstance(node, PatVar):
        if not scope.patterns:
            raise _Fail(node.span, f"pattern variable {node.name} outside a rule")
        return Sym(node.name)
    if isinstance(node, Call):
        args = [to_value(a, scope) for a in node.args]
        for a, an in zip(args, node.args):
            if not isinstance(a, Expr):
                raise _Fail(an.span, f"function argument must be a scalar, got a {_kind(a)}")
        if node.name in ELEMENTARY_ARITY:
            if node.primes:
                raise _Fail(node.span, f"derivative marks are only allowed on abstract functions, not {node.name}")
            if len(args) != ELEMENTARY_ARITY[node.name]:
                raise _Fail(node.span, f"{node.name} takes {ELEMENTARY_ARITY[node.name]} argument(s), got {len(args)}")
            try:
                return apply_fn(node.name, args)
            except (ValueError, ZeroDivisionError, ArithmeticError) as exc:
                raise _Fail(node.span, str(exc)) from None
        if node.name in scope.functions:
            arity = scope.functions[node.name]
            if len(args) != arity:
                raise _Fail(node.span, f"function {node.name} takes {arity} argument(s), got {len(args)}")
            return func(node.name, args[0], node.primes)
        raise _Fail(node.span, f"unknown function {node.name!r}")
    if isinstance(node, Basis):
        if node.head == "d":
            if scope.chart is None:
                raise _Fail(node.span, "differentials d[...] are only allowed in form definitions")
            if node.index not in scope.chart.coords:
                raise _Fail(node.span, f"{node.index!r} is not a coordinate of chart {scope.chart.name}")
            return _Form(DifferentialForm.differential(scope.chart, node.index))
        if node.head == "D":
            if scope.base_coords is None:
                raise _Fail(node.span, "coordinate fields D[...] are only allowed in anchor definitions")
            if node.index not in scope.base_coords:
                raise _Fail(node.span, f"{node.index!r} is not a base coordinate")
            return _Field({scope.base_coords.index(node.index): ONE})
        if scope.rank is None:
            raise _Fail(node.span, "basis sections e[...] are only allowed in bracket definitions")
        if not node.index.isdigit() or not 1 <= int(node.index) <= scope.rank:
            raise _Fail(node.span, f"basis index must be 1..{scope.rank}, got {node.index}")
        return _Section({int(node.index) - 1: ONE})
    if isinstance(node, Unary):
        v = to_value(node.operand, scope)
        return _scale(v, Const(-1)) if not isinstance(v, Expr) else neg(v)
    if isinstance(node, Binary):
        a = to_value(node.left, scope)
        b = to_value(node.right, scope)
        op = node.op
        try:
            if op in "+-":
                return _combine(a, b, node.span, 1 if op == "+" else -1)
            if op == "*":
                if isinstance(a, Expr):
                    return _scale(b, a)
                if isinstance(b, Expr):
                    return _scale(a, b)
                raise _Fail(node.span, f"cannot multiply a {_kind(a)} by a {_kind(b)} (use ^^ for wedge)")
            if op == "/":
                if not isinstance(b, Expr):
                    raise _Fail(node.span, f"cannot divide by a {_kind(b)}")
                if b.is_zero:
                    raise _Fail(node.span, "division by zero")
                return _scale(a, power(b, -1))
            if op == "^^":
                if not (isinstance(a, _Form) and isinstance(b, _Form)):
                    raise _Fail(node.span, "^^ needs differential forms on both sides")
                return _Form(wedge(a.form, b.form))
            if op == "^":
                if not isinstance(a, Expr):
                    raise _Fail(node.span, f"cannot raise a {_kind(a)} to a power")
                if not (isinstance(b, Const) and b.value.denominator == 1):
                    raise _Fail(node.right.span, "exponent must be an integer constant")
                k = int(b.value)
                if abs(k) > MAX_EXPONENT:
                    raise _Fail(node.right.span, f"exponent {k} out of range (|k| <= {MAX_EXPONENT})")
                if k < 0 and a.is_zero:
                    raise _Fail(node.span, "division by zero")
                return power(a, k)
        except _Fail:
            raise
        except (ValueError, ZeroDivisionError, ArithmeticError) as exc:
            raise _Fail(node.span, str(exc)) from None
        raise _Fail(node.span, f"unknown operator {op}")  # pragma: no cover
    raise _Fail(node.span, "expected an expression")


def scalar(node: Node, scope: Scope) -> Expr:
    v = to_value(node, scope)
    if not isinstance(v, Expr):
        raise _Fail(node.span, f"expected a scalar expression, got a {_kind(v)}")
    return v


def constant(node: Node, params: Mapping[str, float] | None = None) -> float:
    e = scalar(node, Scope(symbols=set(params or {})))
    try:
        v = evaluate(e, {}, _env(params))
    except (EvaluationError, ZeroDivisionError, OverflowError, ValueError) as exc:
        raise _Fail(node.span, f"cannot evaluate constant: {exc}") from None
    if not math.isfinite(v):
        raise _Fail(node.span, "constant is not finite")
    return float(v)


def _env(params):
    return Environment(params or {})


# ---------------------------------------------------------------------------
# problem spec


@dataclass
class ExpectSpec:
    key: str
    index: tuple[int, ...]
    op: str
    value: Any  # Expr, float, str or bool
    within: float | None
    span: Span


@dataclass
class TaskSpec:
    kind: str
    name: str
    params: dict[str, Any]
    expects: list[ExpectSpec]
    span: Span


@dataclass
class ProblemSpec:
    charts: dict[str, Chart] = field(default_factory=dict)
    functions: dict[str, int] = field(default_factory=dict)
    rules: list[RewriteRule] = field(default_factory=list)
    coframes: dict[str, Coframe] = field(default_factory=dict)
    form_systems: dict[str, FormSystem] = field(default_factory=dict)
    algebroids: dict[str, TrivializedAlgebroid] = field(default_factory=dict)
    realizations: dict[str, Realization] = field(default_factory=dict)
    tasks: list[TaskSpec] = field(default_factory=list)
    document: Document | None = None


# task parameter and expectation schemas
# parameter types: coframe, system (coframe or forms), algebroid, realization, int, num, ints,
# point@<param>, path@<param>, expr@<param>
TASK_PARAMS: dict[str, dict[str, str]] = {
    "analyze": {"coframe": "coframe", "point": "point@coframe", "max_order": "int", "trials": "int",
                "seed": "int", "tol": "num", "radius": "num"},
    "signature": {"coframe": "coframe", "point": "point@coframe", "order": "int", "seed": "int"},
    "algebroid-check": {"algebroid": "algebroid", "tol": "num", "trials": "int", "seed": "int"},
    "isotropy": {"algebroid": "algebroid", "point": "point@algebroid", "samples": "int", "tol": "num",
                 "seed": "int"},
    "modular": {"algebroid": "algebroid", "density": "expr@algebroid", "tol": "num", "trials": "int",
                "seed": "int"},
    "check-realization": {"realization": "realization", "tol": "num", "trials": "int", "seed": "int"},
    "equiv": {"coframe": "coframe", "point": "point@coframe", "coframe2": "coframe", "point2": "point@coframe2",
              "order": "int", "max_order": "int", "tol": "num", "seed": "int"},
    "develop": {"source": "system", "target": "coframe", "from": "point@source", "to": "point@target",
                "path": "path@source", "path2": "path@source", "steps": "int", "convergence": "ints",
                "residual_against": "coframe"},
    "monodromy": {"source": "system", "target": "coframe", "to": "point@target", "path": "path@source",
                  "path2": "path@source", "steps": "int"},
}
REQUIRED = {
    "analyze": ["coframe"], "signature": ["coframe", "point"], "algebroid-check": ["algebroid"],
    "isotropy": ["algebroid"], "modular": ["algebroid"], "check-realization": ["realization"],
    "equiv": ["coframe", "point", "point2"], "develop": ["source", "target", "from", "to", "path"],
    "monodromy": ["source", "target", "to", "path"],
}
# expectation value types: expr@<param>, num, int, ident, bool
TASK_EXPECTS: dict[str, dict[str, str]] = {
    "analyze": {"C": "expr@coframe", "rank": "int", "stabilized_at": "int", "d": "int", "fully_regular": "bool",
                "pass": "bool"},
    "signature": {"pass": "bool"},
    "algebroid-check": {"pass": "bool", "residual": "num", "bracket_residual": "num", "jacobi_residual": "num"},
    "isotropy": {"orbit_dim": "int", "symmetry_dim": "int", "dimension": "int", "class": "ident", "pass": "bool"},
    "modular": {"c": "expr@algebroid", "closed": "num", "pass": "bool"},
    "check-realization": {"pass": "bool", "mc_defect": "num", "map_rank": "int"},
    "equiv": {"verdict": "ident"},
    "develop": {"residual": "num", "ratio_min": "num", "ratio_max": "num", "path_defect": "num",
                "mismatch": "num", "pass": "bool"},
    "monodromy": {"defect": "num", "reparam_defect": "num", "pass": "bool"},
}
EXPECT_INDEX = {("analyze", "C"): 3, ("modular", "c"): 1}


class Resolver:
    def __init__(self, doc: Document):
        self.doc = doc
        self.spec = ProblemSpec(document=doc)
        self.diags: list[Diagnostic] = []
        self.names: dict[str, str] = {}  # global object names -> kind

    def fail(self, span: Span, msg: str) -> None:
        self.diags.append(Diagnostic(span, msg))

    def declare(self, name: str, kind: str, span: Span) -> bool:
        if name in self.names:
            self.fail(span, f"{kind} name {name!r} already declared as a {self.names[name]}")
            return False
        if name in RESERVED or name in ELEMENTARY_ARITY:
            self.fail(span, f"{name!r} is reserved")
            return False
        self.names[name] = kind
        return True

    def run(self) -> ProblemSpec:
        decls = self.doc.decls
        for d in decls:
            if isinstance(d, FunctionDecl):
                self.guard(d, self.function)
        for d in decls:
            if isinstance(d, RuleDecl):
                self.guard(d, self.rule)
        for d in decls:
            if isinstance(d, ChartDecl):
                self.guard(d, self.chart)
        for d in decls:
            if isinstance(d, CoframeDecl):
                self.guard(d, self.coframe)
        for d in decls:
            if isinstance(d, AlgebroidDecl):
                self.guard(d, self.algebroid)
        for d in decls:
            if isinstance(d, RealizationDecl):
                self.guard(d, self.realization)
        for d in decls:
            if isinstance(d, TaskDecl):
                self.guard(d, self.task)
        if self.diags:
            raise ProblemError(sorted(self.diags, key=lambda x: (x.span.line, x.span.col)))
        return self.spec

    def guard(self, d: Node, fn) -> None:
        try:
            fn(d)
        except _Fail as f:
            self.fail(f.span, f.message)
        except RecursionError:
            self.fail(d.span, "declaration nested too deeply")
        except (ValueError, TypeError, ZeroDivisionError, ArithmeticError, KeyError, EvaluationError) as exc:
            self.fail(d.span, str(exc) or type(exc).__name__)

    # declarations
    def function(self, d: FunctionDecl) -> None:
        if not self.declare(d.name, "function", d.span):
            return
        if d.arity != 1:
            raise _Fail(d.span, f"abstract functions must take exactly one argument, {d.name} declares {d.arity}")
        self.spec.functions[d.name] = d.arity

    def rule(self, d: RuleDecl) -> None:
        scope = Scope(functions=self.spec.functions, patterns=True, any_symbol=True)
        lhs, rhs = scalar(d.lhs, scope), scalar(d.rhs, scope)
        extra = {s for s in free_symbols(rhs) if s.startswith("?")} - {s for s in free_symbols(lhs) if s.startswith("?")}
        if extra:
            raise _Fail(d.rhs.span, f"rule {d.name}: replacement uses unbound pattern variables {sorted(extra)}")
        if isinstance(lhs, Const):
            raise _Fail(d.lhs.span, f"rule {d.name}: pattern cannot be a constant")
        self.spec.rules.append(RewriteRule(lhs, rhs, d.name))

    def chart(self, d: ChartDecl) -> None:
        if not self.declare(d.name, "chart", d.span):
            return
        if not d.coords:
            raise _Fail(d.span, f"chart {d.name} declares no coordinates")
        params: dict[str, float] = {}
        for p in d.params:
            if p.name in params or p.name in self.spec.functions or p.name in RESERVED:
                raise _Fail(p.span, f"parameter {p.name!r} clashes with another name")
            params[p.name] = constant(p.value, params)
        coords, intervals = [], []
        for c in d.coords:
            if c.name in coords or c.name in params or c.name in RESERVED or c.name in self.spec.functions:
                raise _Fail(c.span, f"coordinate {c.name!r} clashes with another name")
            lo, hi = constant(c.lo, params), constant(c.hi, params)
            if not lo < hi:
                raise _Fail(c.span, f"empty sampling interval for {c.name}")
            coords.append(c.name)
            intervals.append((lo, hi))
        bindings = {}
        for b in d.binds:
            if b.func not in self.spec.functions:
                raise _Fail(b.span, f"binding for undeclared function {b.func!r}")
            if b.func in bindings:
                raise _Fail(b.span, f"function {b.func} bound twice")
            if b.var in self.spec.functions or b.var in RESERVED:
                raise _Fail(b.span, f"binding variable {b.var!r} clashes with another name")
            if b.ode is None:
                body = scalar(b.body, Scope(symbols={b.var} | set(params), functions=self.spec.functions))
                bindings[b.func] = ExprBinding(b.var, body)
            else:
                rhs = scalar(b.body, Scope(symbols={b.var, b.func} | set(params),
                                           functions={k: v for k, v in self.spec.functions.items() if k != b.func}))
                x0, y0 = constant(b.ode[0], params), constant(b.ode[1], params)
                bindings[b.func] = ODEBinding(b.var, b.func, rhs, x0, y0)
        scope = Scope(symbols=set(coords) | set(params), functions=self.spec.functions)
        cons = tuple(Constraint(scalar(r.lhs, scope), r.op, scalar(r.rhs, scope)) for r in d.requires)
        self.spec.charts[d.name] = Chart(d.name, tuple(coords), tuple(intervals), cons, bindings, params,
                                         tuple(self.spec.rules))

    def _chart_ref(self, name: str, span: Span) -> Chart:
        ch = self.spec.charts.get(name)
        if ch is None:
            raise _Fail(span, f"unknown chart {name!r}")
        return ch

    def coframe(self, d: CoframeDecl) -> None:
        if not self.declare(d.name, d.kind, d.span):
            return
        chart = self._chart_ref(d.chart, d.chart_span)
        forms: dict[str, DifferentialForm] = {}
        labels = []
        for m in d.members:
            if m.name in forms or m.name in chart.coords or m.name in RESERVED:
                raise _Fail(m.span, f"form name {m.name!r} clashes with another name")
            scope = Scope(symbols=set(chart.coords) | set(chart.params), functions=self.spec.functions,
                          chart=chart, forms=forms)
            v = to_value(m.value, scope)
            if isinstance(v, Expr) and v.is_zero:
                v = _Form(DifferentialForm.zero(chart, 1))
            if not isinstance(v, _Form) or v.form.degree != 1:
                raise _Fail(m.value.span, f"{m.name} must be a 1-form, got a {_kind(v)}")
            forms[m.name] = v.form
            labels.append(m.name)
        if d.kind == "coframe":
            if len(forms) != chart.dim:
                raise _Fail(d.span, f"dimension mismatch: coframe {d.name} declares {len(forms)} forms "
                                    f"on the {chart.dim}-dimensional chart {chart.name}")
            self.spec.coframes[d.name] = Coframe(chart, tuple(forms.values()), d.name, tuple(labels))
        else:
            if not 1 <= len(forms) <= chart.dim:
                raise _Fail(d.span, f"forms block {d.name} must declare between 1 and {chart.dim} forms")
            self.spec.form_systems[d.name] = FormSystem(chart, tuple(forms.values()), d.name)

    def algebroid(self, d: AlgebroidDecl) -> None:
        if not self.declare(d.name, "algebroid", d.span):
            return
        if d.rank < 1:
            raise _Fail(d.span, "algebroid rank must be positive")
        if d.base is None:
            base = Chart(f"{d.name}_point", (), (), rules=tuple(self.spec.rules))
        else:
            base = self._chart_ref(d.base, d.base_span)
        scope = Scope(symbols=set(base.coords) | set(base.params), functions=self.spec.functions)
        B, F = {}, {}
        pairs = set()
        for b in d.brackets:
            if not (1 <= b.i < b.j <= d.rank):
                raise _Fail(b.span, f"bracket entries need 1 <= i < j <= {d.rank}, got {b.i} {b.j}")
            if (b.i, b.j) in pairs:
                raise _Fail(b.span, f"bracket {b.i} {b.j} declared twice")
            pairs.add((b.i, b.j))
            v = to_value(b.value, Scope(scope.symbols, scope.functions, rank=d.rank))
            if isinstance(v, Expr) and v.is_zero:
                continue
            if not isinstance(v, _Section):
                raise _Fail(b.value.span, f"bracket value must be a combination of e[k], got a {_kind(v)}")
            for k, c in v.comps.items():
                B[(k, b.i - 1, b.j - 1)] = c
        seen = set()
        for a in d.anchors:
            if not 1 <= a.i <= d.rank:
                raise _Fail(a.span, f"anchor index must be 1..{d.rank}, got {a.i}")
            if a.i in seen:
                raise _Fail(a.span, f"anchor {a.i} declared twice")
            seen.add(a.i)
            v = to_value(a.value, Scope(scope.symbols, scope.functions, base_coords=base.coords))
            if isinstance(v, Expr) and v.is_zero:
                continue
            if not isinstance(v, _Field):
                raise _Fail(a.value.span, f"anchor value must be a combination of D[x], got a {_kind(v)}")
            for c, e in v.comps.items():
                F[(a.i - 1, c)] = e
        self.spec.algebroids[d.name] = TrivializedAlgebroid(base, d.rank, B, F, name=d.name)

    def realization(self, d: RealizationDecl) -> None:
        if not self.declare(d.name, "realization", d.span):
            return
        if d.coframe is None or d.algebroid is None:
            raise _Fail(d.span, f"realization {d.name} needs both coframe and algebroid")
        cf = self.spec.coframes.get(d.coframe.value.name)
        if cf is None:
            raise _Fail(d.coframe.value.span, f"unknown coframe {d.coframe.value.name!r}")
        A = self.spec.algebroids.get(d.algebroid.value.name)
        if A is None:
            raise _Fail(d.algebroid.value.span, f"unknown algebroid {d.algebroid.value.name!r}")
        if cf.n != A.n:
            raise _Fail(d.span, f"dimension mismatch: coframe has {cf.n} forms, algebroid rank is {A.n}")
        comps = {}
        scope = Scope(symbols=set(cf.chart.coords) | set(cf.chart.params), functions=self.spec.functions)
        for m in d.map:
            if m.name not in A.base.coords:
                raise _Fail(m.span, f"{m.name!r} is not a coordinate of the base {A.base.name}")
            if m.name in comps:
                raise _Fail(m.span, f"map component {m.name} given twice")
            comps[m.name] = scalar(m.value, scope)
        missing = [c for c in A.base.coords if c not in comps]
        if missing:
            raise _Fail(d.span, f"map is missing base coordinates {missing}")
        self.spec.realizations[d.name] = Realization(cf, tuple(comps[c] for c in A.base.coords), d.name, A)

    # tasks
    def _object(self, kind: str, node: Node):
        if not isinstance(node, Name):
            raise _Fail(node.span, f"expected the name of a {kind}")
        table = {"coframe": self.spec.coframes, "algebroid": self.spec.algebroids,
                 "realization": self.spec.realizations}
        if kind == "system":
            obj = self.spec.coframes.get(node.name) or self.spec.form_systems.get(node.name)
        else:
            obj = table[kind].get(node.name)
        if obj is None:
            raise _Fail(node.span, f"unknown {kind if kind != 'system' else 'coframe or forms'} {node.name!r}")
        return obj

    @staticmethod
    def _chart_of(obj) -> Chart:
        return obj.base if isinstance(obj, TrivializedAlgebroid) else obj.chart

    def _point(self, node: Node, chart: Chart) -> dict[str, float]:
        if not isinstance(node, PointLit):
            raise _Fail(node.span, "expected a point (name = value, ...)")
        names = [c for c, _ in node.items]
        if sorted(names) != sorted(chart.coords) or len(set(names)) != len(names):
            raise _Fail(node.span, f"point must assign each coordinate of {chart.name} once: {list(chart.coords)}")
        return {c: constant(v, chart.params) for c, v in node.items}

    def _path(self, node: Node, chart: Chart, steps: int | None) -> PathSpec:
        kw = {"steps": steps} if steps else {}
        if isinstance(node, Waypoints):
            pts = [self._point(p, chart) for p in node.points]
            if len(pts) < 2:
                raise _Fail(node.span, "a waypoint path needs at least two points")
            return PathSpec(chart.coords, tuple(tuple(p[c] for c in chart.coords) for p in pts), **kw)
        if isinstance(node, Curve):
            names = [c for c, _ in node.items]
            if sorted(names) != sorted(chart.coords) or len(set(names)) != len(names):
                raise _Fail(node.span, f"curve must give each coordinate of {chart.name} once")
            if node.param in chart.coords:
                raise _Fail(node.span, "curve parameter clashes with a coordinate")
            scope = Scope(symbols={node.param} | set(chart.params), functions={})
            curve = {c: scalar(e, scope) for c, e in node.items}
            return PathSpec(chart.coords, curve=curve, param=node.param, **kw)
        raise _Fail(node.span, "expected waypoints(...) or curve(...)")

    def task(self, d: TaskDecl) -> None:
        schema = TASK_PARAMS.get(d.kind)
        if schema is None:
            raise _Fail(d.span, f"unknown task kind {d.kind!r} (expected one of {', '.join(TASK_PARAMS)})")
        raw: dict[str, Assign] = {}
        for p in d.params:
            if p.name not in schema:
                raise _Fail(p.span, f"unknown parameter {p.name!r} for task {d.kind}")
            if p.name in raw:
                raise _Fail(p.span, f"parameter {p.name} given twice")
            raw[p.name] = p
        for r in REQUIRED[d.kind]:
            if r not in raw:
                raise _Fail(d.span, f"task {d.kind} needs parameter {r!r}")
        if d.kind == "isotropy" and ("point" in raw) == ("samples" in raw):
            raise _Fail(d.span, "task isotropy needs exactly one of 'point' and 'samples'")
        if d.kind == "equiv" and "coframe2" not in raw:
            raw["coframe2"] = raw["coframe"]
        vals: dict[str, Any] = {}
        order = sorted(raw, key=lambda k: "@" in schema[k])
        steps = None
        if "steps" in raw:
            steps = self._int(raw["steps"].value, 4)
        for k in order:
            typ, node = schema[k], raw[k].value
            if typ in ("coframe", "system", "algebroid", "realization"):
                vals[k] = self._object(typ, node)
            elif typ == "int":
                vals[k] = self._int(node, 0)
            elif typ == "num":
                vals[k] = constant(node)
            elif typ == "ints":
                if not isinstance(node, Tuple_):
                    raise _Fail(node.span, "expected a list [n1, n2, ...]")
                vals[k] = [self._int(x, 4) for x in node.items]
            else:
                what, ref = typ.split("@")
                chart = self._chart_of(vals[ref])
                if what == "point":
                    vals[k] = self._point(node, chart)
                elif what == "path":
                    vals[k] = self._path(node, chart, steps)
                else:
                    vals[k] = scalar(node, Scope(symbols=set(chart.coords) | set(chart.params),
                                                 functions=self.spec.functions))
        expects = [self._expect(d, e, vals) for e in d.expects]
        name = d.name or f"{d.kind}-{len(self.spec.tasks) + 1}"
        self.spec.tasks.append(TaskSpec(d.kind, name, vals, expects, d.span))

    def _int(self, node: Node, minimum: int) -> int:
        v = constant(node)
        if v != int(v) or v < minimum or v > 10 ** 7:
            raise _Fail(node.span, f"expected an integer between {minimum} and 10^7")
        return int(v)

    def _expect(self, d: TaskDecl, e: Expect, vals: dict) -> ExpectSpec:
        schema = TASK_EXPECTS[d.kind]
        typ = schema.get(e.key)
        if typ is None:
            raise _Fail(e.span, f"unknown expectation {e.key!r} for task {d.kind}")
        need = EXPECT_INDEX.get((d.kind, e.key), 0)
        if len(e.index) != need:
            raise _Fail(e.span, f"expectation {e.key} takes {need} index value(s)")
        within = constant(e.within) if e.within is not None else None
        if typ in ("ident", "bool"):
            if e.op != "=":
                raise _Fail(e.span, f"expectation {e.key} only supports =")
            v: Any = hyphenated(e.value)
            if v is None:
                raise _Fail(e.value.span, "expected a name")
            if typ == "bool":
                if v not in ("true", "false"):
                    raise _Fail(e.value.span, "expected true or false")
                v = v == "true"
        elif typ.startswith("expr@"):
            obj = vals[typ.split("@")[1]]
            chart = self._chart_of(obj)
            n = obj.n
            if any(not 1 <= i <= n for i in e.index):
                raise _Fail(e.span, f"index out of range 1..{n}")
            if e.key == "C" and not e.index[1] < e.index[2]:
                raise _Fail(e.span, "structure function expectations need i < j")
            v = scalar(e.value, Scope(symbols=set(chart.coords) | set(chart.params), functions=self.spec.functions))
        else:
            v = constant(e.value)
            if typ == "int":
                if v != int(v):
                    raise _Fail(e.value.span, "expected an integer")
                v = int(v)
        return ExpectSpec(e.key, e.index, e.op, v, within, e.span)


def hyphenated(node: Node) -> str | None:
    """Names such as not-equivalent arrive as a chain of subtractions."""
    if isinstance(node, Name):
        return node.name
    if isinstance(node, Binary) and node.op == "-":
        a, b = hyphenated(node.left), hyphenated(node.right)
        if a is not None and b is not None and isinstance(node.right, Name):
            return f"{a}-{b}"
    return None


def resolve(doc: Document) -> ProblemSpec:
    return Resolver(doc).run()


def parse_expr(text: str, functions: Iterable[str] = ()) -> Expr:
    """A scalar expression; any plain name is a symbol and ``functions`` are unary abstract functions."""
    p = Parser(text)
    node = p.expr()
    if p.tok.kind != "EOF":
        p.error(f"unexpected {p.tok.text!r} after expression")
    try:
        return scalar(node, Scope(functions={f: 1 for f in functions}, any_symbol=True, patterns=True))
    except _Fail as f:
        raise ProblemError([Diagnostic(f.span, f.message)]) from None


def parse_problem(text: str | bytes) -> ProblemSpec:
    """Parse and resolve a problem file; raises ProblemError with located diagnostics."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProblemError([Diagnostic(Span(1, exc.start + 1, 1, exc.end + 1), "input is not valid UTF-8")]) from None
    return resolve(parse_document(text))
