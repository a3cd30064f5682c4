"""Immutable expression trees with canonical construction.

Every node is built through the smart constructors in this module (``add``,
``mul``, ``power``, ``sin`` ...), which always return a canonical form:

* sums are flat, like terms are collected, the rational constant is kept apart;
* products are flat, equal bases have their integer exponents merged, a single
  rational coefficient is kept in front;
* products of sums with positive exponents are expanded;
* sums appearing with negative exponents are made monic (leading coefficient 1);
* all ``exp`` factors of a product are merged into one;
* ``cos(a)**k`` with ``k >= 2`` is rewritten through ``cos(a)**2 = 1 - sin(a)**2``.

Rebuilding a canonical tree reproduces it, which is what makes
:func:`normalize` idempotent.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, Sequence, Union

Number = Union[int, Fraction]

ELEMENTARY = ("sin", "cos", "tan", "exp", "log", "sqrt", "atan2")
BUILTIN_CONSTANTS = {"pi"}


class Expr:
    __slots__ = ("_key", "_hash")

    def _init_key(self, key: tuple) -> None:
        self._key = key
        self._hash = hash(key)

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, Expr):
            return NotImplemented
        return self._hash == other._hash and self._key == other._key

    def __ne__(self, other: object) -> bool:
        res = self.__eq__(other)
        return res if res is NotImplemented else not res

    @property
    def key(self) -> tuple:
        return self._key

    def __lt__(self, other: "Expr") -> bool:
        return self._key < other._key

    # arithmetic sugar
    def __add__(self, other): return add(self, as_expr(other))
    def __radd__(self, other): return add(as_expr(other), self)
    def __sub__(self, other): return add(self, neg(as_expr(other)))
    def __rsub__(self, other): return add(as_expr(other), neg(self))
    def __mul__(self, other): return mul(self, as_expr(other))
    def __rmul__(self, other): return mul(as_expr(other), self)
    def __truediv__(self, other): return div(self, as_expr(other))
    def __rtruediv__(self, other): return div(as_expr(other), self)
    def __neg__(self): return neg(self)

    def __pow__(self, n: int):
        if not isinstance(n, int):
            raise TypeError("only integer powers are supported")
        return power(self, n)

    def __repr__(self) -> str:
        from .printer import to_str

        return f"Expr({to_str(self)})"

    def __str__(self) -> str:
        from .printer import to_str

        return to_str(self)

    def children(self) -> tuple["Expr", ...]:
        return ()

    @property
    def is_zero(self) -> bool:
        return isinstance(self, Const) and self.value == 0


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: Number):
        self.value = Fraction(value)
        self._init_key((0, self.value))


class Sym(Expr):
    """A coordinate, parameter, or pattern variable (name starting with ``?``)."""

    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name
        self._init_key((1, name))

    @property
    def is_pattern(self) -> bool:
        return self.name.startswith("?")


class Func(Expr):
    """Abstract function of one argument carrying a derivative order."""

    __slots__ = ("name", "arg", "order")

    def __init__(self, name: str, arg: Expr, order: int = 0):
        if order < 0:
            raise ValueError("derivative order must be nonnegative")
        self.name = name
        self.arg = arg
        self.order = order
        self._init_key((2, name, order, arg._key))

    def children(self):
        return (self.arg,)


class Apply(Expr):
    """Elementary function application."""

    __slots__ = ("fn", "args")

    def __init__(self, fn: str, args: tuple[Expr, ...]):
        self.fn = fn
        self.args = args
        self._init_key((3, fn, tuple(a._key for a in args)))

    def children(self):
        return self.args


class Mul(Expr):
    """``coeff * prod(base**exp)``; bases are never Const or Mul."""

    __slots__ = ("coeff", "factors")

    def __init__(self, coeff: Fraction, factors: tuple[tuple[Expr, int], ...]):
        self.coeff = coeff
        self.factors = factors
        self._init_key((4, tuple((b._key, e) for b, e in factors), coeff))

    def children(self):
        return tuple(b for b, _ in self.factors)


class Add(Expr):
    """``const + sum(coeff * monomial)``; monomials carry coefficient 1."""

    __slots__ = ("const", "terms")

    def __init__(self, const: Fraction, terms: tuple[tuple[Expr, Fraction], ...]):
        self.const = const
        self.terms = terms
        self._init_key((5, tuple((m._key, c) for m, c in terms), const))

    def children(self):
        return tuple(m for m, _ in self.terms)


ZERO = Const(0)
ONE = Const(1)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction)):
        return Const(x)
    if isinstance(x, float):
        return Const(Fraction(repr(x)))
    if isinstance(x, str):
        return Sym(x)
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


def const(v: Number) -> Const:
    return Const(v)


def sym(name: str) -> Sym:
    return Sym(name)


def func(name: str, arg, order: int = 0) -> Func:
    return Func(name, as_expr(arg), order)


# ---------------------------------------------------------------------------
# sums


def split_coeff(e: Expr) -> tuple[Fraction, Expr]:
    """Split ``e`` into a rational coefficient and a monic monomial."""
    if isinstance(e, Const):
        return e.value, ONE
    if isinstance(e, Mul):
        if e.coeff == 1:
            return Fraction(1), e
        return e.coeff, _make_product(Fraction(1), e.factors)
    return Fraction(1), e


def _scale(mono: Expr, c: Fraction) -> Expr:
    if c == 1:
        return mono
    if isinstance(mono, Mul):
        return Mul(c * mono.coeff, mono.factors)
    return Mul(c, ((mono, 1),))


def add(*args: Expr) -> Expr:
    total = Fraction(0)
    acc: dict[Expr, Fraction] = {}
    for a in args:
        if isinstance(a, Const):
            total += a.value
        elif isinstance(a, Add):
            total += a.const
            for m, c in a.terms:
                acc[m] = acc.get(m, 0) + c
        else:
            c, m = split_coeff(a)
            acc[m] = acc.get(m, 0) + c
    terms = tuple(sorted(((m, c) for m, c in acc.items() if c != 0), key=lambda t: t[0]._key))
    if not terms:
        return Const(total)
    if len(terms) == 1 and total == 0:
        m, c = terms[0]
        return _scale(m, c)
    return Add(total, terms)


def add_terms(e: Expr) -> list[Expr]:
    """The summands of ``e`` (constant first, if nonzero)."""
    if isinstance(e, Add):
        out: list[Expr] = [Const(e.const)] if e.const != 0 else []
        out.extend(_scale(m, c) for m, c in e.terms)
        return out
    return [e]


def neg(e: Expr) -> Expr:
    return mul(Const(-1), e)


def sub(a: Expr, b: Expr) -> Expr:
    return add(a, neg(b))


# ---------------------------------------------------------------------------
# products


def _make_product(coeff: Fraction, factors) -> Expr:
    if coeff == 0:
        return ZERO
    factors = tuple(sorted(factors, key=lambda t: t[0]._key))
    if not factors:
        return Const(coeff)
    if coeff == 1 and len(factors) == 1 and factors[0][1] == 1:
        return factors[0][0]
    return Mul(coeff, factors)


def _monic(a: Add) -> tuple[Fraction, Expr]:
    lead = a.terms[0][1]
    if lead == 1:
        return Fraction(1), a
    return lead, Add(a.const / lead, tuple((m, c / lead) for m, c in a.terms))


def mul(*args: Expr) -> Expr:
    coeff = Fraction(1)
    powers: dict[Expr, int] = {}
    for a in args:
        if isinstance(a, Const):
            coeff *= a.value
        elif isinstance(a, Mul):
            coeff *= a.coeff
            for b, e in a.factors:
                powers[b] = powers.get(b, 0) + e
        else:
            powers[a] = powers.get(a, 0) + 1
    if coeff == 0:
        return ZERO
    return _finish_product(coeff, powers)


def _finish_product(coeff: Fraction, powers: dict[Expr, int]) -> Expr:
    # monic sums
    if any(isinstance(b, Add) and b.terms[0][1] != 1 for b in powers):
        fixed: dict[Expr, int] = {}
        for b, e in powers.items():
            if e == 0:
                continue
            if isinstance(b, Add):
                lead, b = _monic(b)
                coeff *= lead ** e
            fixed[b] = fixed.get(b, 0) + e
        powers = fixed

    extras: list[Expr] = []
    exp_args: list[Expr] = []
    kept: list[tuple[Expr, int]] = []
    expand: list[tuple[Add, int]] = []
    for b, e in powers.items():
        if e == 0:
            continue
        if isinstance(b, Apply):
            if b.fn == "exp":
                exp_args.append(mul(Const(e), b.args[0]))
                continue
            if b.fn == "sqrt" and (e >= 2 or e <= -2):
                q, r = divmod(e, 2)
                extras.append(power(b.args[0], q))
                if r:
                    kept.append((b, r))
                continue
            if b.fn == "cos" and e >= 2:
                q, r = divmod(e, 2)
                s = Apply("sin", b.args)
                extras.append(power(add(ONE, Mul(Fraction(-1), ((s, 2),))), q))
                if r:
                    kept.append((b, r))
                continue
        if isinstance(b, Add) and e > 0:
            expand.append((b, e))
            continue
        kept.append((b, e))
    if exp_args:
        arg = add(*exp_args)
        if not arg.is_zero:
            ex = exp(arg)
            if isinstance(ex, Apply) and ex.fn == "exp":
                kept.append((ex, 1))
            else:
                extras.append(ex)
    core = _make_product(coeff, kept)
    if extras:
        core = mul(core, *extras)
    if expand:
        return _expand_product(core, expand)
    return core


def _expand_product(core: Expr, sums: list[tuple[Add, int]]) -> Expr:
    result = [core]
    for s, e in sums:
        for _ in range(e):
            parts = add_terms(s)
            result = [mul(r, p) for r in result for p in parts]
            result = add_terms(add(*result))
    return add(*result)


def power(base: Expr, n: int) -> Expr:
    if n == 0:
        return ONE
    if n == 1:
        return base
    if isinstance(base, Const):
        if base.value == 0 and n < 0:
            raise ZeroDivisionError("zero raised to a negative power")
        return Const(base.value ** n)
    if isinstance(base, Mul):
        powers: dict[Expr, int] = {}
        for b, e in base.factors:
            powers[b] = powers.get(b, 0) + e * n
        return _finish_product(base.coeff ** n, powers)
    return _finish_product(Fraction(1), {base: n})


def div(a: Expr, b: Expr) -> Expr:
    if b.is_zero:
        raise ZeroDivisionError("symbolic division by zero")
    return mul(a, power(b, -1))


# ---------------------------------------------------------------------------
# elementary functions


def _is_negative(e: Expr) -> bool:
    if isinstance(e, Const):
        return e.value < 0
    if isinstance(e, Mul):
        return e.coeff < 0
    if isinstance(e, Add):
        return e.terms[0][1] < 0
    return False


def sin(a: Expr) -> Expr:
    a = as_expr(a)
    if a.is_zero:
        return ZERO
    if _is_negative(a):
        return neg(Apply("sin", (neg(a),)))
    return Apply("sin", (a,))


def cos(a: Expr) -> Expr:
    a = as_expr(a)
    if a.is_zero:
        return ONE
    if _is_negative(a):
        return Apply("cos", (neg(a),))
    return Apply("cos", (a,))


def tan(a: Expr) -> Expr:
    a = as_expr(a)
    if a.is_zero:
        return ZERO
    if _is_negative(a):
        return neg(Apply("tan", (neg(a),)))
    return Apply("tan", (a,))


def exp(a: Expr) -> Expr:
    a = as_expr(a)
    if a.is_zero:
        return ONE
    if isinstance(a, Apply) and a.fn == "log":
        return a.args[0]
    return Apply("exp", (a,))


def log(a: Expr) -> Expr:
    a = as_expr(a)
    if isinstance(a, Const) and a.value == 1:
        return ZERO
    if isinstance(a, Apply) and a.fn == "exp":
        return a.args[0]
    return Apply("log", (a,))


def _exact_sqrt(q: Fraction):
    if q < 0:
        return None
    from math import isqrt

    n, d = q.numerator, q.denominator
    rn, rd = isqrt(n), isqrt(d)
    if rn * rn == n and rd * rd == d:
        return Fraction(rn, rd)
    return None


def sqrt(a: Expr) -> Expr:
    a = as_expr(a)
    if isinstance(a, Const):
        r = _exact_sqrt(a.value)
        if r is not None:
            return Const(r)
    return Apply("sqrt", (a,))


def atan2(y: Expr, x: Expr) -> Expr:
    return Apply("atan2", (as_expr(y), as_expr(x)))


APPLY_BUILDERS = {
    "sin": sin, "cos": cos, "tan": tan, "exp": exp, "log": log, "sqrt": sqrt,
}


def apply_fn(fn: str, args: Sequence[Expr]) -> Expr:
    if fn == "atan2":
        if len(args) != 2:
            raise ValueError("atan2 takes two arguments")
        return atan2(*args)
    if fn not in APPLY_BUILDERS:
        raise ValueError(f"unknown elementary function {fn!r}")
    if len(args) != 1:
        raise ValueError(f"{fn} takes one argument")
    return APPLY_BUILDERS[fn](args[0])


# ---------------------------------------------------------------------------
# traversal


def rebuild(e: Expr, fn) -> Expr:
    """Rebuild ``e`` through the canonical constructors, mapping children by ``fn``."""
    if isinstance(e, (Const, Sym)):
        return e
    if isinstance(e, Func):
        return Func(e.name, fn(e.arg), e.order)
    if isinstance(e, Apply):
        return apply_fn(e.fn, [fn(a) for a in e.args])
    if isinstance(e, Mul):
        return mul(Const(e.coeff), *(power(fn(b), k) for b, k in e.factors))
    if isinstance(e, Add):
        return add(Const(e.const), *(mul(Const(c), fn(m)) for m, c in e.terms))
    raise TypeError(type(e))


def walk(e: Expr) -> Iterator[Expr]:
    seen: set[int] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        yield node
        stack.extend(node.children())


def free_symbols(e: Expr) -> set[str]:
    return {n.name for n in walk(e) if isinstance(n, Sym) and n.name not in BUILTIN_CONSTANTS}


def function_names(e: Expr) -> set[str]:
    return {n.name for n in walk(e) if isinstance(n, Func)}


def size(e: Expr) -> int:
    return sum(1 for _ in walk(e))


def subs(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Substitute symbols by expressions."""
    if not mapping:
        return e
    cache: dict[Expr, Expr] = {}

    def go(node: Expr) -> Expr:
        hit = cache.get(node)
        if hit is not None:
            return hit
        if isinstance(node, Sym):
            out = mapping.get(node.name, node)
        elif isinstance(node, Const):
            out = node
        else:
            out = rebuild(node, go)
        cache[node] = out
        return out

    return go(e)


def normalize(e: Expr, rules: Sequence = (), max_passes: int = 32) -> Expr:
    """Canonical form of ``e``; user rewrite rules are applied to a fixpoint."""
    from .rules import apply_rules

    cache: dict[Expr, Expr] = {}

    def go(node: Expr) -> Expr:
        hit = cache.get(node)
        if hit is None:
            hit = node if isinstance(node, (Const, Sym)) else rebuild(node, go)
            cache[node] = hit
        return hit

    out = go(e)
    if rules:
        out = apply_rules(out, rules, max_passes=max_passes)
    return out


# ---------------------------------------------------------------------------
# differentiation


class UnknownCoordinate(ValueError):
    pass


def _diff_apply(e: Apply, var: str) -> Expr:
    fn = e.fn
    if fn == "atan2":
        y, x = e.args
        dy, dx = diff(y, var), diff(x, var)
        if dy.is_zero and dx.is_zero:
            return ZERO
        return div(sub(mul(x, dy), mul(y, dx)), add(power(x, 2), power(y, 2)))
    a = e.args[0]
    da = diff(a, var)
    if da.is_zero:
        return ZERO
    if fn == "sin":
        outer = cos(a)
    elif fn == "cos":
        outer = neg(sin(a))
    elif fn == "tan":
        outer = add(ONE, power(e, 2))
    elif fn == "exp":
        outer = e
    elif fn == "log":
        outer = power(a, -1)
    elif fn == "sqrt":
        outer = mul(Const(Fraction(1, 2)), power(e, -1))
    else:  # pragma: no cover
        raise ValueError(fn)
    return mul(outer, da)


@lru_cache(maxsize=None)
def diff(e: Expr, var: str) -> Expr:
    """Partial derivative of ``e`` with respect to the symbol ``var``."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Sym):
        return ONE if e.name == var else ZERO
    if isinstance(e, Func):
        da = diff(e.arg, var)
        if da.is_zero:
            return ZERO
        return mul(Func(e.name, e.arg, e.order + 1), da)
    if isinstance(e, Apply):
        return _diff_apply(e, var)
    if isinstance(e, Add):
        return add(*(mul(Const(c), diff(m, var)) for m, c in e.terms))
    if isinstance(e, Mul):
        parts = []
        for i, (b, k) in enumerate(e.factors):
            db = diff(b, var)
            if db.is_zero:
                continue
            rest = [power(bb, kk) for j, (bb, kk) in enumerate(e.factors) if j != i]
            parts.append(mul(Const(e.coeff * k), power(b, k - 1), db, *rest))
        return add(*parts)
    raise TypeError(type(e))


def differentiate(e: Expr, coord: str, coordinates: Iterable[str] | None = None) -> Expr:
    """Partial derivative with an optional check that ``coord`` is a chart coordinate."""
    if coordinates is not None and coord not in set(coordinates):
        raise UnknownCoordinate(f"unknown coordinate {coord!r}")
    return diff(e, coord)
