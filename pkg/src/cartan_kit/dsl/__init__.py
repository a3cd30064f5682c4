"""Problem-file language: parser, resolver, pretty-printer and reports."""

from .pretty import format_problem, pretty, strip_spans
from .report import check, emit_report
from .resolve import ExpectSpec, ProblemSpec, TaskSpec, parse_expr, parse_problem, resolve
from .syntax import Diagnostic, ProblemError, Span, parse_document

__all__ = [
    "Diagnostic", "ExpectSpec", "ProblemError", "ProblemSpec", "Span", "TaskSpec", "check", "emit_report",
    "format_problem", "parse_document", "parse_expr", "parse_problem", "pretty", "resolve", "strip_spans",
]
