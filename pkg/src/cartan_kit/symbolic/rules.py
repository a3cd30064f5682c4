"""User rewrite rules with pattern variables (symbols named ``?x``).

A product pattern matches any sub-product of a term, so the rule
``J'(?k)*H(?k) -> -?k - J(?k)^2`` rewrites ``3*J'(k)*H(k)*t`` into
``3*t*(-k - J(k)^2)``.  Sum patterns only match a whole sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

from .expr import (
    Add, Apply, Const, Expr, Func, Mul, Sym, free_symbols, mul, power, rebuild, subs,
)


class RewriteError(RuntimeError):
    def __init__(self, message: str, rule: "RewriteRule | None" = None):
        super().__init__(message)
        self.rule = rule


@dataclass(frozen=True)
class RewriteRule:
    lhs: Expr
    rhs: Expr
    name: str = ""

    def __post_init__(self):
        pv_l = {s for s in free_symbols(self.lhs) if s.startswith("?")}
        pv_r = {s for s in free_symbols(self.rhs) if s.startswith("?")}
        if not pv_r <= pv_l:
            raise ValueError(f"rule {self.name or self.lhs}: replacement uses unbound pattern variables {sorted(pv_r - pv_l)}")
        if isinstance(self.lhs, Const):
            raise ValueError("rule pattern cannot be a constant")

    def __str__(self) -> str:
        label = f"{self.name}: " if self.name else ""
        return f"{label}{self.lhs} -> {self.rhs}"


Bindings = dict


def _bind(b: Bindings, name: str, value: Expr) -> Bindings | None:
    old = b.get(name)
    if old is None:
        nb = dict(b)
        nb[name] = value
        return nb
    return b if old == value else None


def match(pat: Expr, e: Expr, b: Bindings | None = None) -> Iterator[Bindings]:
    """All ways ``pat`` matches the whole of ``e``."""
    b = {} if b is None else b
    if isinstance(pat, Sym) and pat.is_pattern:
        nb = _bind(b, pat.name, e)
        if nb is not None:
            yield nb
        return
    if type(pat) is not type(e):
        return
    if isinstance(pat, (Const, Sym)):
        if pat == e:
            yield b
        return
    if isinstance(pat, Func):
        if pat.name == e.name and pat.order == e.order:
            yield from match(pat.arg, e.arg, b)
        return
    if isinstance(pat, Apply):
        if pat.fn == e.fn and len(pat.args) == len(e.args):
            yield from _match_seq(list(pat.args), list(e.args), b)
        return
    if isinstance(pat, Mul):
        for nb, rest_coeff, rest in _match_product(pat, e, b):
            if rest_coeff == 1 and not rest:
                yield nb
        return
    if isinstance(pat, Add):
        if pat == e:
            yield b
        return


def _match_seq(ps, es, b) -> Iterator[Bindings]:
    if not ps:
        yield b
        return
    for nb in match(ps[0], es[0], b):
        yield from _match_seq(ps[1:], es[1:], nb)


def _factors_of(e: Expr) -> tuple[Fraction, list[tuple[Expr, int]]]:
    if isinstance(e, Mul):
        return e.coeff, list(e.factors)
    if isinstance(e, Const):
        return e.value, []
    return Fraction(1), [(e, 1)]


def _match_product(pat: Expr, e: Expr, b: Bindings):
    """Match ``pat`` against a sub-product of ``e``; yields (bindings, leftover coeff, leftover factors)."""
    pc, pfs = _factors_of(pat)
    ec, efs = _factors_of(e)
    if pc == 0 or ec == 0:
        return
    rest_coeff = ec / pc

    def go(i: int, avail: list[tuple[Expr, int]], bb: Bindings):
        if i == len(pfs):
            yield bb, avail
            return
        pb, pk = pfs[i]
        for j, (eb, ek) in enumerate(avail):
            if (pk > 0 and ek < pk) or (pk < 0 and ek > pk):
                continue
            for nb in match(pb, eb, bb):
                left = list(avail)
                if ek == pk:
                    del left[j]
                else:
                    left[j] = (eb, ek - pk)
                yield from go(i + 1, left, nb)

    for bb, left in go(0, efs, b):
        yield bb, rest_coeff, left


def _rewrite_node(e: Expr, rules: Sequence[RewriteRule]):
    for rule in rules:
        if isinstance(rule.lhs, Mul) or (not isinstance(rule.lhs, (Add, Sym)) and isinstance(e, Mul)):
            for bb, rc, left in _match_product(rule.lhs, e, {}):
                rest = mul(Const(rc), *(power(x, k) for x, k in left))
                return mul(rest, subs(rule.rhs, bb)), rule
            continue
        for bb in match(rule.lhs, e):
            return subs(rule.rhs, bb), rule
    return None


def rewrite_pass(e: Expr, rules: Sequence[RewriteRule]):
    """One bottom-up pass; returns (new expression, last rule fired or None)."""
    fired: list[RewriteRule] = []
    cache: dict[Expr, Expr] = {}

    def go(node: Expr) -> Expr:
        hit = cache.get(node)
        if hit is not None:
            return hit
        out = node if isinstance(node, (Const, Sym)) else rebuild(node, go)
        res = _rewrite_node(out, rules)
        if res is not None:
            out, rule = res
            fired.append(rule)
        cache[node] = out
        return out

    out = go(e)
    return out, (fired[-1] if fired else None)


def apply_rules(e: Expr, rules: Sequence[RewriteRule], max_passes: int = 32) -> Expr:
    last = None
    for _ in range(max_passes):
        new, rule = rewrite_pass(e, rules)
        if rule is None or new == e:
            return new
        e, last = new, rule
    raise RewriteError(f"rewriting did not terminate within {max_passes} passes (rule {last})", last)
