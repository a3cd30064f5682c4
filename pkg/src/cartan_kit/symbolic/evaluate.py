"""Numeric evaluation of expressions.

Expressions are compiled once into straight-line numpy code (common
subexpressions shared) and cached per environment.  Abstract functions are
resolved through bindings: either an expression in a dummy variable or the
solution of a scalar ODE integrated with fixed-step RK4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .expr import Add, Apply, Const, Expr, Func, Mul, Sym, add, diff, mul
from .printer import to_str

TINY = 1e-300


class EvaluationError(ValueError):
    """Unbound symbol or domain error; ``subexpr`` names the offending node."""

    def __init__(self, message: str, subexpr: Expr | None = None):
        super().__init__(message)
        self.subexpr = subexpr


class FunctionBinding:
    """Concrete meaning of an abstract one-argument function."""

    def values(self, x, order: int, env: "Environment"):
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError


@dataclass(eq=False)
class ExprBinding(FunctionBinding):
    var: str
    body: Expr

    def derivative(self, order: int) -> Expr:
        e = self.body
        for _ in range(order):
            e = diff(e, self.var)
        return e

    def values(self, x, order, env):
        fn = env.compile([self.derivative(order)], (self.var,))
        return fn(x)[0]

    def describe(self) -> str:
        return f"{self.var} -> {to_str(self.body)}"

    def __eq__(self, other):
        return isinstance(other, ExprBinding) and self.var == other.var and self.body == other.body

    def __hash__(self):
        return hash((self.var, self.body))


@dataclass(eq=False)
class ODEBinding(FunctionBinding):
    """y(x) solving y' = rhs(x, y), y(x0) = y0, by RK4 with ``density`` steps per unit."""

    var: str
    dep: str
    rhs: Expr
    x0: float
    y0: float
    density: int = 4000
    _cache: dict = field(default_factory=dict, repr=False)

    def total_derivative(self, order: int) -> Expr:
        """Expression in (var, dep) for the ``order``-th derivative of y."""
        if order == 0:
            return Sym(self.dep)
        g = self.rhs
        for _ in range(order - 1):
            g = add(diff(g, self.var), mul(diff(g, self.dep), self.rhs))
        return g

    def solve(self, x, env):
        x = np.asarray(x, dtype=float)
        key = (x.shape, x.tobytes())
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        f = env.compile([self.rhs], (self.var, self.dep))
        span = float(np.max(np.abs(x - self.x0))) if x.size else 0.0
        n = max(8, int(math.ceil(span * self.density)))
        h = (x - self.x0) / n
        t = np.full_like(x, self.x0)
        y = np.full_like(x, self.y0)
        for _ in range(n):
            k1 = f(t, y)[0]
            k2 = f(t + h / 2, y + h / 2 * k1)[0]
            k3 = f(t + h / 2, y + h / 2 * k2)[0]
            k4 = f(t + h, y + h * k3)[0]
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t = t + h
        if len(self._cache) > 256:
            self._cache.clear()
        self._cache[key] = y
        return y

    def values(self, x, order, env):
        y = self.solve(x, env)
        if order == 0:
            return y if np.ndim(x) else float(y)
        fn = env.compile([self.total_derivative(order)], (self.var, self.dep))
        out = fn(np.asarray(x, dtype=float), y)[0]
        return out if np.ndim(x) else float(out)

    def describe(self) -> str:
        return f"ode {self.dep}' = {to_str(self.rhs)}, {self.dep}({self.x0}) = {self.y0}"

    def __eq__(self, other):
        return (isinstance(other, ODEBinding) and (self.var, self.dep, self.rhs, self.x0, self.y0, self.density)
                == (other.var, other.dep, other.rhs, other.x0, other.y0, other.density))

    def __hash__(self):
        return hash((self.var, self.dep, self.rhs, self.x0, self.y0))


def _check_log(x, node):
    if np.any(np.asarray(x) <= 0):
        raise EvaluationError(f"log of nonpositive value in {to_str(node)}", node)
    return np.log(x)


def _check_sqrt(x, node):
    if np.any(np.asarray(x) < 0):
        raise EvaluationError(f"sqrt of negative value in {to_str(node)}", node)
    return np.sqrt(x)


def _check_inv(x, k, node):
    if np.any(np.abs(np.asarray(x)) < TINY):
        raise EvaluationError(f"division by a value below {TINY:g} in {to_str(node)}", node)
    return np.power(x, -k) if k != 1 else 1.0 / x


def _check_tan(x, node):
    return np.tan(x)


def _atan2(y, x, node):
    return np.arctan2(y, x)


class Environment:
    """Parameters and function bindings used to evaluate expressions."""

    def __init__(self, params: Mapping[str, float] | None = None,
                 bindings: Mapping[str, FunctionBinding] | None = None):
        self.params = dict(params or {})
        self.bindings = dict(bindings or {})
        self._compiled: dict = {}

    def merged(self, other: "Environment") -> "Environment":
        params = dict(self.params)
        bindings = dict(self.bindings)
        for k, v in other.params.items():
            if k in params and params[k] != v:
                raise EvaluationError(f"conflicting values for parameter {k!r}")
            params[k] = v
        for k, v in other.bindings.items():
            if k in bindings and bindings[k] != v:
                raise EvaluationError(f"conflicting bindings for function {k!r}")
            bindings[k] = v
        return Environment(params, bindings)

    def call_function(self, name: str, x, order: int, node: Expr):
        b = self.bindings.get(name)
        if b is None:
            raise EvaluationError(f"unbound abstract function {name!r} in {to_str(node)}", node)
        return b.values(x, order, self)

    def compile(self, exprs: Sequence[Expr], argnames: Sequence[str]):
        key = (tuple(exprs), tuple(argnames))
        fn = self._compiled.get(key)
        if fn is None:
            fn = _compile(exprs, argnames, self)
            if len(self._compiled) > 4096:
                self._compiled.clear()
            self._compiled[key] = fn
        return fn


def _compile(exprs: Sequence[Expr], argnames: Sequence[str], env: Environment):
    names: dict[Expr, str] = {}
    lines: list[str] = []
    consts: list[Expr] = []
    ns: dict = {
        "_log": _check_log, "_sqrt": _check_sqrt, "_inv": _check_inv, "_np": np,
        "_atan2": _atan2, "_call": env.call_function, "_nodes": consts,
    }
    args = {a: f"a{i}" for i, a in enumerate(argnames)}

    def node_ref(node: Expr) -> str:
        consts.append(node)
        return f"_nodes[{len(consts) - 1}]"

    def emit(node: Expr) -> str:
        hit = names.get(node)
        if hit is not None:
            return hit
        if isinstance(node, Const):
            return repr(float(node.value))
        if isinstance(node, Sym):
            if node.name in args:
                return args[node.name]
            if node.name in env.params:
                return repr(float(env.params[node.name]))
            if node.name == "pi":
                return repr(math.pi)
            raise EvaluationError(f"unbound symbol {node.name!r}", node)
        if isinstance(node, Func):
            code = f"_call({node.name!r}, {emit(node.arg)}, {node.order}, {node_ref(node)})"
        elif isinstance(node, Apply):
            a = [emit(x) for x in node.args]
            fn = node.fn
            if fn in ("sin", "cos", "exp"):
                code = f"_np.{fn}({a[0]})"
            elif fn == "tan":
                code = f"_np.tan({a[0]})"
            elif fn == "log":
                code = f"_log({a[0]}, {node_ref(node)})"
            elif fn == "sqrt":
                code = f"_sqrt({a[0]}, {node_ref(node)})"
            elif fn == "atan2":
                code = f"_np.arctan2({a[0]}, {a[1]})"
            else:  # pragma: no cover
                raise EvaluationError(f"unknown function {fn}", node)
        elif isinstance(node, Mul):
            num: list[str] = []
            if node.coeff != 1:
                num.append(repr(float(node.coeff)))
            for b, k in node.factors:
                bs = emit(b)
                if k == 1:
                    num.append(bs)
                elif k > 1:
                    num.append(f"{bs}**{k}")
                else:
                    num.append(f"_inv({bs}, {-k}, {node_ref(node)})")
            code = "*".join(num)
        elif isinstance(node, Add):
            parts = [repr(float(node.const))] if node.const != 0 else []
            for m, c in node.terms:
                ms = emit(m)
                parts.append(ms if c == 1 else f"{float(c)!r}*{ms}")
            code = " + ".join(parts)
        else:  # pragma: no cover
            raise TypeError(type(node))
        name = f"t{len(names)}"
        names[node] = name
        lines.append(f"    {name} = {code}")
        return name

    outs = [emit(e) for e in exprs]
    src = f"def _f({', '.join(args.values())}):\n" + "\n".join(lines) + \
        f"\n    return [{', '.join(outs)}]\n"
    exec(compile(src, "<cartan_kit.compiled>", "exec"), ns)
    return ns["_f"]


def evaluate(e: Expr, point: Mapping[str, float], env: Environment | None = None):
    """Value of ``e`` at ``point`` (scalars or equally shaped arrays)."""
    env = env or Environment()
    names = tuple(sorted(point))
    fn = env.compile([e], names)
    with np.errstate(all="ignore"):
        out = fn(*(point[n] for n in names))[0]
    if np.ndim(out) == 0:
        out = float(out)
        if not math.isfinite(out):
            raise EvaluationError(f"non-finite value of {to_str(e)}", e)
    elif not np.all(np.isfinite(out)):
        raise EvaluationError(f"non-finite value of {to_str(e)}", e)
    return out


def evaluate_many(exprs: Sequence[Expr], point: Mapping[str, np.ndarray], env: Environment | None = None,
                  check_finite: bool = True) -> np.ndarray:
    """Stack of values, shape (len(exprs),) + sample shape."""
    env = env or Environment()
    names = tuple(sorted(point))
    fn = env.compile(list(exprs), names)
    args = [np.asarray(point[n], dtype=float) for n in names]
    shape = args[0].shape if args else ()
    with np.errstate(all="ignore"):
        vals = fn(*args)
    out = np.empty((len(exprs),) + shape)
    for i, v in enumerate(vals):
        out[i] = v
    if check_finite and not np.all(np.isfinite(out)):
        bad = int(np.argwhere(~np.all(np.isfinite(out.reshape(len(exprs), -1)), axis=1))[0][0])
        raise EvaluationError(f"non-finite value of {to_str(exprs[bad])}", exprs[bad])
    return out
