"""Lexer and recursive-descent parser for problem files.

The parser produces a syntax tree with source positions; name resolution and
construction of the geometric objects happen in :mod:`cartan_kit.dsl.resolve`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator


@dataclass(frozen=True)
class Span:
    line: int
    col: int
    end_line: int
    end_col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


@dataclass(frozen=True)
class Diagnostic:
    span: Span
    message: str

    def format(self, source: str = "<input>") -> str:
        return f"{source}:{self.span.line}:{self.span.col}: error: {self.message}"


class ProblemError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(f"{d.span}: {d.message}" for d in self.diagnostics))


# ---------------------------------------------------------------------------
# lexer


@dataclass(frozen=True)
class Token:
    kind: str  # NUM, IDENT, PATVAR, OP, EOF
    text: str
    span: Span


_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<patvar>\?[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\^\^|=>|>=|<=|!=|[{}()\[\],;:=+\-*/^'<>|])
""", re.VERBOSE)


def tokenize(text: str) -> list[Token]:
    toks: list[Token] = []
    errors: list[Diagnostic] = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            ch = text[pos]
            errors.append(Diagnostic(Span(line, col, line, col + 1), f"unexpected character {ch!r}"))
            pos += 1
            col += 1
            continue
        kind = m.lastgroup
        s = m.group()
        end = pos + len(s)
        if kind == "nl":
            line, col = line + 1, 1
        elif kind in ("ws", "comment"):
            col += len(s)
        else:
            span = Span(line, col, line, col + len(s))
            toks.append(Token({"num": "NUM", "ident": "IDENT", "patvar": "PATVAR", "op": "OP"}[kind], s, span))
            col += len(s)
        pos = end
    if errors:
        raise ProblemError(errors)
    toks.append(Token("EOF", "", Span(line, col, line, col)))
    return toks


# ---------------------------------------------------------------------------
# syntax tree


@dataclass(frozen=True)
class Node:
    span: Span


@dataclass(frozen=True)
class Num(Node):
    value: Fraction


@dataclass(frozen=True)
class Name(Node):
    name: str


@dataclass(frozen=True)
class PatVar(Node):
    name: str


@dataclass(frozen=True)
class Call(Node):
    name: str
    primes: int
    args: tuple[Node, ...]


@dataclass(frozen=True)
class Basis(Node):
    """d[x] (differential), D[x] (coordinate field) or e[k] (fiber basis section)."""

    head: str
    index: str


@dataclass(frozen=True)
class Unary(Node):
    op: str
    operand: Node


@dataclass(frozen=True)
class Binary(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class PointLit(Node):
    items: tuple[tuple[str, Node], ...]


@dataclass(frozen=True)
class Waypoints(Node):
    points: tuple[PointLit, ...]


@dataclass(frozen=True)
class Curve(Node):
    param: str
    items: tuple[tuple[str, Node], ...]


@dataclass(frozen=True)
class Tuple_(Node):
    items: tuple[Node, ...]


# declarations

@dataclass(frozen=True)
class CoordDecl(Node):
    name: str
    lo: Node
    hi: Node


@dataclass(frozen=True)
class Require(Node):
    lhs: Node
    op: str
    rhs: Node


@dataclass(frozen=True)
class ParamDecl(Node):
    name: str
    value: Node


@dataclass(frozen=True)
class BindDecl(Node):
    func: str
    var: str
    body: Node
    ode: tuple[Node, Node] | None = None  # (x0, y0) when body is an ODE right-hand side


@dataclass(frozen=True)
class ChartDecl(Node):
    name: str
    coords: tuple[CoordDecl, ...]
    requires: tuple[Require, ...]
    params: tuple[ParamDecl, ...]
    binds: tuple[BindDecl, ...]


@dataclass(frozen=True)
class FunctionDecl(Node):
    name: str
    arity: int


@dataclass(frozen=True)
class RuleDecl(Node):
    name: str
    lhs: Node
    rhs: Node


@dataclass(frozen=True)
class Assign(Node):
    name: str
    value: Node


@dataclass(frozen=True)
class CoframeDecl(Node):
    kind: str  # "coframe" or "forms"
    name: str
    chart: str
    chart_span: Span
    members: tuple[Assign, ...]


@dataclass(frozen=True)
class BracketDecl(Node):
    i: int
    j: int
    value: Node


@dataclass(frozen=True)
class AnchorDecl(Node):
    i: int
    value: Node


@dataclass(frozen=True)
class AlgebroidDecl(Node):
    name: str
    base: str | None
    base_span: Span | None
    rank: int
    brackets: tuple[BracketDecl, ...]
    anchors: tuple[AnchorDecl, ...]


@dataclass(frozen=True)
class RealizationDecl(Node):
    name: str
    coframe: Assign | None
    algebroid: Assign | None
    map: tuple[Assign, ...]


@dataclass(frozen=True)
class Expect(Node):
    key: str
    index: tuple[int, ...]
    op: str
    value: Node
    within: Node | None


@dataclass(frozen=True)
class TaskDecl(Node):
    kind: str
    name: str | None
    params: tuple[Assign, ...]
    expects: tuple[Expect, ...]


@dataclass(frozen=True)
class Document:
    decls: tuple[Node, ...]


# ---------------------------------------------------------------------------
# parser

MAX_DEPTH = 200


class Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.depth = 0

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, span: Span | None = None):
        raise ProblemError([Diagnostic(span or self.tok.span, msg)])

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("OP", "IDENT") and t.text == text

    def accept(self, text: str) -> Token | None:
        if self.at(text):
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, text: str) -> Token:
        t = self.accept(text)
        if t is None:
            found = self.tok.text or "end of input"
            self.error(f"expected {text!r}, found {found!r}")
        return t

    def ident(self, what: str = "identifier") -> Token:
        t = self.tok
        if t.kind != "IDENT":
            self.error(f"expected {what}, found {t.text or 'end of input'!r}")
        self.i += 1
        return t

    def integer(self, what: str = "integer") -> tuple[int, Span]:
        t = self.tok
        if t.kind != "NUM" or not t.text.isdigit():
            self.error(f"expected {what}, found {t.text or 'end of input'!r}")
        if len(t.text) > 6:
            self.error(f"{what} {t.text!r} out of range")
        self.i += 1
        return int(t.text), t.span

    def span_from(self, start: Span) -> Span:
        prev = self.toks[max(self.i - 1, 0)].span
        return Span(start.line, start.col, prev.end_line, prev.end_col)

    # document
    def document(self) -> Document:
        decls = []
        while self.tok.kind != "EOF":
            t = self.tok
            kw = t.text if t.kind == "IDENT" else None
            handler = {
                "chart": self.chart, "function": self.function, "rule": self.rule,
                "coframe": self.coframe, "forms": self.coframe, "algebroid": self.algebroid,
                "realization": self.realization, "task": self.task,
            }.get(kw)
            if handler is None:
                self.error(f"expected a declaration (chart, function, rule, coframe, forms, algebroid, "
                           f"realization, task), found {t.text!r}")
            decls.append(handler())
        return Document(tuple(decls))

    def chart(self) -> ChartDecl:
        start = self.expect("chart").span
        name = self.ident("chart name").text
        self.expect("{")
        coords, reqs, params, binds = [], [], [], []
        while not self.accept("}"):
            if self.tok.kind == "EOF":
                self.error("unterminated chart block")
            s = self.tok.span
            if self.accept("coords"):
                while True:
                    cs = self.tok.span
                    c = self.ident("coordinate name").text
                    self.expect("in")
                    self.expect("(")
                    lo = self.expr()
                    self.expect(",")
                    hi = self.expr()
                    self.expect(")")
                    coords.append(CoordDecl(self.span_from(cs), c, lo, hi))
                    if not self.accept(","):
                        break
            elif self.accept("require"):
                lhs = self.expr()
                op = self.tok
                if op.text not in (">", "<", ">=", "<=", "!="):
                    self.error("expected a relation (>, <, >=, <=, !=)")
                self.i += 1
                rhs = self.expr()
                reqs.append(Require(self.span_from(s), lhs, op.text, rhs))
            elif self.accept("param"):
                p = self.ident("parameter name").text
                self.expect("=")
                params.append(ParamDecl(self.span_from(s), p, self.expr()))
            elif self.accept("bind"):
                f = self.ident("function name").text
                self.expect("(")
                v = self.ident("variable name").text
                self.expect(")")
                self.expect("=")
                if self.at("ode") and self.peek().text == "(":
                    self.i += 2
                    body = self.expr()
                    self.expect(",")
                    x0 = self.expr()
                    self.expect(",")
                    y0 = self.expr()
                    self.expect(")")
                    binds.append(BindDecl(self.span_from(s), f, v, body, (x0, y0)))
                else:
                    binds.append(BindDecl(self.span_from(s), f, v, self.expr()))
            else:
                self.error(f"expected coords, require, param or bind, found {self.tok.text!r}")
            self.expect(";")
        return ChartDecl(self.span_from(start), name, tuple(coords), tuple(reqs), tuple(params), tuple(binds))

    def function(self) -> FunctionDecl:
        start = self.expect("function").span
        name = self.ident("function name").text
        self.expect("/")
        arity, _ = self.integer("arity")
        self.expect(";")
        return FunctionDecl(self.span_from(start), name, arity)

    def rule(self) -> RuleDecl:
        start = self.expect("rule").span
        name = self.ident("rule name").text
        self.expect(":")
        lhs = self.expr()
        self.expect("=>")
        rhs = self.expr()
        self.expect(";")
        return RuleDecl(self.span_from(start), name, lhs, rhs)

    def assignments_block(self) -> tuple[Assign, ...]:
        self.expect("{")
        out = []
        while not self.accept("}"):
            if self.tok.kind == "EOF":
                self.error("unterminated block")
            s = self.tok.span
            name = self.ident("name").text
            self.expect("=")
            out.append(Assign(s, name, self.expr()))
            self.expect(";")
        return tuple(out)

    def coframe(self) -> CoframeDecl:
        t = self.ident()
        name = self.ident(f"{t.text} name").text
        self.expect("on")
        ct = self.ident("chart name")
        members = self.assignments_block()
        return CoframeDecl(self.span_from(t.span), t.text, name, ct.text, ct.span, members)

    def algebroid(self) -> AlgebroidDecl:
        start = self.expect("algebroid").span
        name = self.ident("algebroid name").text
        base = base_span = None
        if self.accept("on"):
            bt = self.ident("base chart name")
            base, base_span = bt.text, bt.span
        self.expect("rank")
        rank, _ = self.integer("rank")
        self.expect("{")
        brackets, anchors = [], []
        while not self.accept("}"):
            if self.tok.kind == "EOF":
                self.error("unterminated algebroid block")
            s = self.tok.span
            if self.accept("bracket"):
                i, _ = self.integer("bracket index")
                j, _ = self.integer("bracket index")
                self.expect("=")
                brackets.append(BracketDecl(self.span_from(s), i, j, self.expr()))
            elif self.accept("anchor"):
                i, _ = self.integer("anchor index")
                self.expect("=")
                anchors.append(AnchorDecl(self.span_from(s), i, self.expr()))
            else:
                self.error(f"expected bracket or anchor, found {self.tok.text!r}")
            self.expect(";")
        return AlgebroidDecl(self.span_from(start), name, base, base_span, rank, tuple(brackets), tuple(anchors))

    def realization(self) -> RealizationDecl:
        start = self.expect("realization").span
        name = self.ident("realization name").text
        self.expect("{")
        cof = alg = None
        maps: list[Assign] = []
        while not self.accept("}"):
            if self.tok.kind == "EOF":
                self.error("unterminated realization block")
            s = self.tok.span
            if self.accept("coframe"):
                self.expect("=")
                t = self.ident("coframe name")
                cof = Assign(s, "coframe", Name(t.span, t.text))
            elif self.accept("algebroid"):
                self.expect("=")
                t = self.ident("algebroid name")
                alg = Assign(s, "algebroid", Name(t.span, t.text))
            elif self.accept("map"):
                while True:
                    ms = self.tok.span
                    c = self.ident("base coordinate").text
                    self.expect("=")
                    maps.append(Assign(ms, c, self.expr()))
                    if not self.accept(","):
                        break
            else:
                self.error(f"expected coframe, algebroid or map, found {self.tok.text!r}")
            self.expect(";")
        return RealizationDecl(self.span_from(start), name, cof, alg, tuple(maps))

    def task(self) -> TaskDecl:
        start = self.expect("task").span
        parts = [self.ident("task kind").text]
        while self.at("-") and self.peek().kind == "IDENT":
            self.i += 1
            parts.append(self.ident().text)
        kind = "-".join(parts)
        name = None
        if self.tok.kind == "IDENT":
            words = [self.ident().text]
            while self.at("-") and self.peek().kind == "IDENT":
                self.i += 1
                words.append(self.ident().text)
            name = "-".join(words)
        self.expect("{")
        params, expects = [], []
        while not self.accept("}"):
            if self.tok.kind == "EOF":
                self.error("unterminated task block")
            s = self.tok.span
            if self.accept("expect"):
                key = self.ident("expectation key").text
                idx: list[int] = []
                if self.accept("["):
                    while True:
                        v, _ = self.integer("index")
                        idx.append(v)
                        if not self.accept(","):
                            break
                    self.expect("]")
                op = self.tok
                if op.text not in ("=", "<=", ">=", "<", ">"):
                    self.error("expected =, <=, >=, < or > in expectation")
                self.i += 1
                val = self.value()
                within = self.expr() if self.accept("within") else None
                expects.append(Expect(self.span_from(s), key, tuple(idx), op.text, val, within))
            else:
                key = self.ident("task parameter").text
                self.expect("=")
                params.append(Assign(s, key, self.value()))
            self.expect(";")
        return TaskDecl(self.span_from(start), kind, name, tuple(params), tuple(expects))

    # values
    def value(self) -> Node:
        s = self.tok.span
        if self.at("waypoints") and self.peek().text == "(":
            self.i += 2
            pts = [self.point()]
            while self.accept(","):
                pts.append(self.point())
            self.expect(")")
            return Waypoints(self.span_from(s), tuple(pts))
        if self.at("curve") and self.peek().text == "(":
            self.i += 2
            param = self.ident("curve parameter").text
            self.expect(":")
            items = []
            while True:
                c = self.ident("coordinate").text
                self.expect("=")
                items.append((c, self.expr()))
                if not self.accept(","):
                    break
            self.expect(")")
            return Curve(self.span_from(s), param, tuple(items))
        if self.at("(") and self.peek().kind == "IDENT" and self.peek(2).text == "=":
            return self.point()
        if self.at("(") and self.peek().text == ")":
            self.i += 2
            return PointLit(self.span_from(s), ())
        if self.at("["):
            self.i += 1
            items = [self.expr()]
            while self.accept(","):
                items.append(self.expr())
            self.expect("]")
            return Tuple_(self.span_from(s), tuple(items))
        return self.expr()

    def point(self) -> PointLit:
        s = self.expect("(").span
        items = []
        if not self.at(")"):
            while True:
                c = self.ident("coordinate").text
                self.expect("=")
                items.append((c, self.expr()))
                if not self.accept(","):
                    break
        self.expect(")")
        return PointLit(self.span_from(s), tuple(items))

    # expressions
    def expr(self) -> Node:
        self.depth += 1
        if self.depth > MAX_DEPTH:
            self.error("expression nested too deeply")
        try:
            s = self.tok.span
            left = self.term()
            while self.at("+") or self.at("-"):
                op = self.tok.text
                self.i += 1
                right = self.term()
                left = Binary(self.span_from(s), op, left, right)
            return left
        finally:
            self.depth -= 1

    def term(self) -> Node:
        s = self.tok.span
        left = self.unary()
        while self.at("*") or self.at("/") or self.at("^^"):
            op = self.tok.text
            self.i += 1
            right = self.unary()
            left = Binary(self.span_from(s), op, left, right)
        return left

    def unary(self) -> Node:
        s = self.tok.span
        if self.accept("-"):
            self.depth += 1
            if self.depth > MAX_DEPTH:
                self.error("expression nested too deeply")
            try:
                return Unary(self.span_from(s), "-", self.unary())
            finally:
                self.depth -= 1
        return self.power()

    def power(self) -> Node:
        s = self.tok.span
        base = self.primary()
        if self.accept("^"):
            self.depth += 1
            if self.depth > MAX_DEPTH:
                self.error("expression nested too deeply")
            try:
                exp = self.unary()
            finally:
                self.depth -= 1
            return Binary(self.span_from(s), "^", base, exp)
        return base

    def primary(self) -> Node:
        t = self.tok
        s = t.span
        if t.kind == "NUM":
            self.i += 1
            mant, _, ex = t.text.lower().partition("e")
            if len(mant) > 64 or (ex and abs(int(ex)) > 300):
                self.error(f"number {t.text!r} out of range", s)
            try:
                v = Fraction(t.text)
            except (ValueError, ZeroDivisionError):
                self.error(f"malformed number {t.text!r}")
            if v.numerator.bit_length() > 256 or v.denominator.bit_length() > 256:
                self.error(f"number {t.text!r} out of range", s)
            return Num(s, v)
        if t.kind == "PATVAR":
            self.i += 1
            return PatVar(s, t.text)
        if t.kind == "IDENT":
            self.i += 1
            if t.text in ("d", "D", "e") and self.at("["):
                self.i += 1
                it = self.tok
                if it.kind not in ("IDENT", "NUM"):
                    self.error("expected a coordinate name or index inside [...]")
                self.i += 1
                self.expect("]")
                return Basis(self.span_from(s), t.text, it.text)
            primes = 0
            while self.accept("'"):
                primes += 1
            if self.at("("):
                self.i += 1
                args = []
                if not self.at(")"):
                    args.append(self.expr())
                    while self.accept(","):
                        args.append(self.expr())
                self.expect(")")
                return Call(self.span_from(s), t.text, primes, tuple(args))
            if primes:
                self.error(f"derivative marks on {t.text!r} need an argument list")
            return Name(s, t.text)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        self.error(f"expected an expression, found {t.text or 'end of input'!r}")


def parse_document(text: str) -> Document:
    try:
        return Parser(text).document()
    except RecursionError:
        raise ProblemError([Diagnostic(Span(1, 1, 1, 1), "input nested too deeply")]) from None


def walk_nodes(n: Node) -> Iterator[Node]:
    yield n
    for v in n.__dict__.values():
        if isinstance(v, Node):
            yield from walk_nodes(v)
        elif isinstance(v, tuple):
            for x in v:
                if isinstance(x, Node):
                    yield from walk_nodes(x)
                elif isinstance(x, tuple):
                    for y in x:
                        if isinstance(y, Node):
                            yield from walk_nodes(y)
