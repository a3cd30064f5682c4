"""Symbolic scalar expressions, charts and the randomized equality oracle."""

from .chart import (
    DEFAULT_SEED, DEFAULT_TOL, DEFAULT_TRIALS, Chart, Constraint, SamplingError,
    max_discrepancy, probably_equal, sample_values,
)
from .evaluate import (
    Environment, EvaluationError, ExprBinding, FunctionBinding, ODEBinding, evaluate, evaluate_many,
)
from .expr import (
    ONE, ZERO, Add, Apply, Const, Expr, Func, Mul, Sym, UnknownCoordinate, add, as_expr, atan2, cos,
    diff, differentiate, div, exp, free_symbols, func, function_names, log, mul, neg, normalize,
    power, sin, size, sqrt, sub, subs, sym, tan,
)
from .printer import to_str
from .rules import RewriteError, RewriteRule, apply_rules, match

__all__ = [name for name in dir() if not name.startswith("_")]
