"""Canonical text for a syntax tree; parsing the output gives back the same tree."""

from __future__ import annotations

from fractions import Fraction

from .syntax import (
    AlgebroidDecl, Basis, Binary, Call, ChartDecl, CoframeDecl, Curve, Document, FunctionDecl, Name, Node, Num,
    PatVar, PointLit, RealizationDecl, RuleDecl, TaskDecl, Tuple_, Unary, Waypoints, parse_document,
)

# binding strength: sum < term < unary < power < atom
_SUM, _TERM, _UNARY, _POWER, _ATOM = range(5)


def format_number(v: Fraction) -> str:
    if v.denominator == 1:
        n = v.numerator
        digits = str(n)
        stripped = digits.rstrip("0")
        if len(digits) > 15 and len(stripped) < len(digits):
            return f"{stripped}e{len(digits) - len(stripped)}"
        return digits
    den = v.denominator
    a = b = 0
    while den % 2 == 0:
        den //= 2
        a += 1
    while den % 5 == 0:
        den //= 5
        b += 1
    if den != 1:
        raise ValueError(f"{v} has no finite decimal expansion")
    k = max(a, b)
    m = v.numerator * 10 ** k // v.denominator
    return f"{m}e-{k}"


def _level(n: Node) -> int:
    if isinstance(n, Binary):
        return {"+": _SUM, "-": _SUM, "*": _TERM, "/": _TERM, "^^": _TERM, "^": _POWER}[n.op]
    if isinstance(n, Unary):
        return _UNARY
    return _ATOM


def _wrap(n: Node, need: int) -> str:
    s = pretty_expr(n)
    return f"({s})" if _level(n) < need else s


def _is_hyphenated(n: Node) -> bool:
    if isinstance(n, Name):
        return True
    return isinstance(n, Binary) and n.op == "-" and isinstance(n.right, Name) and _is_hyphenated(n.left)


def pretty_expr(n: Node) -> str:
    if isinstance(n, Num):
        return format_number(n.value)
    if isinstance(n, (Name, PatVar)):
        return n.name
    if isinstance(n, Basis):
        return f"{n.head}[{n.index}]"
    if isinstance(n, Call):
        return f"{n.name}{chr(39) * n.primes}({', '.join(pretty_expr(a) for a in n.args)})"
    if isinstance(n, Unary):
        return f"-{_wrap(n.operand, _UNARY)}"
    if isinstance(n, Binary):
        if _is_hyphenated(n):
            return f"{pretty_expr(n.left)}-{n.right.name}"
        if n.op == "^":
            return f"{_wrap(n.left, _ATOM)}^{_wrap(n.right, _UNARY)}"
        lvl = _level(n)
        sep = f" {n.op} " if lvl == _SUM else n.op if n.op != "^^" else " ^^ "
        return f"{_wrap(n.left, lvl)}{sep}{_wrap(n.right, lvl + 1)}"
    raise TypeError(f"not an expression node: {type(n).__name__}")


def _items(items) -> str:
    return ", ".join(f"{c} = {pretty_expr(v)}" for c, v in items)


def pretty_value(n: Node) -> str:
    if isinstance(n, PointLit):
        return f"({_items(n.items)})"
    if isinstance(n, Waypoints):
        return f"waypoints({', '.join(pretty_value(p) for p in n.points)})"
    if isinstance(n, Curve):
        return f"curve({n.param}: {_items(n.items)})"
    if isinstance(n, Tuple_):
        return f"[{', '.join(pretty_expr(x) for x in n.items)}]"
    return pretty_expr(n)


def _decl(d: Node) -> list[str]:
    if isinstance(d, FunctionDecl):
        return [f"function {d.name}/{d.arity};"]
    if isinstance(d, RuleDecl):
        return [f"rule {d.name}: {pretty_expr(d.lhs)} => {pretty_expr(d.rhs)};"]
    if isinstance(d, ChartDecl):
        out = [f"chart {d.name} {{"]
        coords = ", ".join(f"{c.name} in ({pretty_expr(c.lo)}, {pretty_expr(c.hi)})" for c in d.coords)
        if coords:
            out.append(f"  coords {coords};")
        out += [f"  require {pretty_expr(r.lhs)} {r.op} {pretty_expr(r.rhs)};" for r in d.requires]
        out += [f"  param {p.name} = {pretty_expr(p.value)};" for p in d.params]
        for b in d.binds:
            if b.ode is None:
                out.append(f"  bind {b.func}({b.var}) = {pretty_expr(b.body)};")
            else:
                out.append(f"  bind {b.func}({b.var}) = ode({pretty_expr(b.body)}, {pretty_expr(b.ode[0])}, "
                           f"{pretty_expr(b.ode[1])});")
        return out + ["}"]
    if isinstance(d, CoframeDecl):
        return ([f"{d.kind} {d.name} on {d.chart} {{"] +
                [f"  {m.name} = {pretty_expr(m.value)};" for m in d.members] + ["}"])
    if isinstance(d, AlgebroidDecl):
        on = f" on {d.base}" if d.base is not None else ""
        return ([f"algebroid {d.name}{on} rank {d.rank} {{"] +
                [f"  bracket {b.i} {b.j} = {pretty_expr(b.value)};" for b in d.brackets] +
                [f"  anchor {a.i} = {pretty_expr(a.value)};" for a in d.anchors] + ["}"])
    if isinstance(d, RealizationDecl):
        out = [f"realization {d.name} {{"]
        if d.coframe is not None:
            out.append(f"  coframe = {d.coframe.value.name};")
        if d.algebroid is not None:
            out.append(f"  algebroid = {d.algebroid.value.name};")
        if d.map:
            out.append(f"  map {_items((m.name, m.value) for m in d.map)};")
        return out + ["}"]
    if isinstance(d, TaskDecl):
        name = f" {d.name}" if d.name else ""
        out = [f"task {d.kind}{name} {{"]
        out += [f"  {p.name} = {pretty_value(p.value)};" for p in d.params]
        for e in d.expects:
            idx = f"[{', '.join(map(str, e.index))}]" if e.index else ""
            within = f" within {pretty_expr(e.within)}" if e.within is not None else ""
            out.append(f"  expect {e.key}{idx} {e.op} {pretty_value(e.value)}{within};")
        return out + ["}"]
    raise TypeError(f"unknown declaration {type(d).__name__}")


def pretty(doc: Document) -> str:
    blocks = ["\n".join(_decl(d)) for d in doc.decls]
    return "\n\n".join(blocks) + "\n" if blocks else ""


def format_problem(text: str) -> str:
    return pretty(parse_document(text))


def strip_spans(n):
    """Span-free nested tuples, for comparing trees parsed from different texts."""
    if isinstance(n, Document):
        return ("Document", tuple(strip_spans(d) for d in n.decls))
    if isinstance(n, Node):
        return (type(n).__name__,) + tuple(strip_spans(v) for k, v in n.__dict__.items()
                                           if k not in ("span", "chart_span", "base_span"))
    if isinstance(n, tuple):
        return tuple(strip_spans(x) for x in n)
    return n
