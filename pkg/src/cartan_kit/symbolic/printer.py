"""Infix rendering of expressions; the output re-parses to the same canonical tree."""

from __future__ import annotations

from fractions import Fraction

from .expr import Add, Apply, Const, Expr, Func, Mul, Sym

_ADD, _MUL, _POW, _ATOM = 1, 2, 3, 4


def _frac(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _prec(e: Expr) -> int:
    if isinstance(e, Add):
        return _ADD
    if isinstance(e, Mul):
        return _MUL
    if isinstance(e, Const):
        return _ATOM if e.value >= 0 and e.value.denominator == 1 else _MUL
    return _ATOM


def _wrap(e: Expr, min_prec: int) -> str:
    s = to_str(e)
    return f"({s})" if _prec(e) < min_prec else s


def _pow_str(base: Expr, k: int) -> str:
    b = _wrap(base, _ATOM)
    return b if k == 1 else f"{b}^{k}"


def _mul_str(m: Mul) -> str:
    c = m.coeff
    sign = "-" if c < 0 else ""
    c = abs(c)
    num = [_pow_str(b, k) for b, k in m.factors if k > 0]
    den = [_pow_str(b, -k) for b, k in m.factors if k < 0]
    if c.numerator != 1 or not num:
        num.insert(0, str(c.numerator))
    if c.denominator != 1:
        den.insert(0, str(c.denominator))
    out = "*".join(num)
    if den:
        d = "*".join(den)
        out += "/" + (d if len(den) == 1 else f"({d})")
    return sign + out


def to_str(e: Expr) -> str:
    if isinstance(e, Const):
        return _frac(e.value)
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, Func):
        return f"{e.name}{chr(39) * e.order}({to_str(e.arg)})"
    if isinstance(e, Apply):
        return f"{e.fn}({', '.join(to_str(a) for a in e.args)})"
    if isinstance(e, Mul):
        return _mul_str(e)
    if isinstance(e, Add):
        parts: list[str] = []
        items = [(m, c) for m, c in e.terms]
        for i, (m, c) in enumerate(items):
            term = to_str(m if c == 1 else Mul(c, m.factors) if isinstance(m, Mul) else Mul(c, ((m, 1),)))
            if i == 0:
                parts.append(term)
            elif term.startswith("-"):
                parts.append(" - " + term[1:])
            else:
                parts.append(" + " + term)
        if e.const > 0:
            parts.append(" + " + _frac(e.const))
        elif e.const < 0:
            parts.append(" - " + _frac(-e.const))
        return "".join(parts)
    raise TypeError(type(e))
