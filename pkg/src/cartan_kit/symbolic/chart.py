"""Coordinate charts with sampling boxes, and the randomized equality oracle."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .evaluate import Environment, EvaluationError, FunctionBinding, evaluate_many
from .expr import Expr, normalize, sub
from .printer import to_str
from .rules import RewriteRule

DEFAULT_SEED = 20240917
DEFAULT_TRIALS = 64
DEFAULT_TOL = 1e-9


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Constraint:
    lhs: Expr
    op: str
    rhs: Expr

    OPS = (">", "<", ">=", "<=", "!=")

    def __post_init__(self):
        if self.op not in self.OPS:
            raise ValueError(f"unknown relation {self.op!r}")

    def holds(self, point: Mapping[str, np.ndarray], env: Environment) -> np.ndarray:
        vals = evaluate_many([self.lhs, self.rhs], point, env, check_finite=False)
        a, b = vals[0], vals[1]
        with np.errstate(invalid="ignore"):
            if self.op == ">":
                ok = a > b
            elif self.op == "<":
                ok = a < b
            elif self.op == ">=":
                ok = a >= b
            elif self.op == "<=":
                ok = a <= b
            else:
                ok = np.abs(a - b) > 1e-9 * (1 + np.abs(a) + np.abs(b))
        return ok & np.isfinite(a) & np.isfinite(b)

    def __str__(self) -> str:
        return f"{to_str(self.lhs)} {self.op} {to_str(self.rhs)}"


@dataclass(frozen=True, eq=False)
class Chart:
    """Named coordinates, an open sampling box, constraints and bindings."""

    name: str
    coords: tuple[str, ...]
    intervals: tuple[tuple[float, float], ...]
    constraints: tuple[Constraint, ...] = ()
    bindings: Mapping[str, FunctionBinding] = field(default_factory=dict)
    params: Mapping[str, float] = field(default_factory=dict)
    rules: tuple[RewriteRule, ...] = ()

    def __post_init__(self):
        if len(set(self.coords)) != len(self.coords):
            raise ValueError(f"chart {self.name}: coordinate names must be distinct")
        if len(self.intervals) != len(self.coords):
            raise ValueError(f"chart {self.name}: one interval per coordinate required")
        for c, (lo, hi) in zip(self.coords, self.intervals):
            if not lo < hi:
                raise ValueError(f"chart {self.name}: empty interval for {c}")
        object.__setattr__(self, "_env", Environment(self.params, self.bindings))

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def env(self) -> Environment:
        return self._env  # type: ignore[attr-defined]

    def __eq__(self, other):
        if not isinstance(other, Chart):
            return NotImplemented
        return (self.name, self.coords, self.intervals, self.constraints, dict(self.bindings),
                dict(self.params), self.rules) == (other.name, other.coords, other.intervals,
                                                   other.constraints, dict(other.bindings),
                                                   dict(other.params), other.rules)

    def __hash__(self):
        return hash((self.name, self.coords, self.intervals))

    def normalize(self, e: Expr) -> Expr:
        return normalize(e, self.rules)

    def contains(self, point: Mapping[str, float], constraints: bool = True) -> bool:
        for c, (lo, hi) in zip(self.coords, self.intervals):
            if c not in point or not lo < float(point[c]) < hi:
                return False
        if constraints and self.constraints:
            p = {c: np.array([float(point[c])]) for c in self.coords}
            return all(bool(k.holds(p, self.env)[0]) for k in self.constraints)
        return True

    def check_point(self, point: Mapping[str, float]) -> dict[str, float]:
        missing = [c for c in self.coords if c not in point]
        if missing:
            raise ValueError(f"point is missing coordinates {missing} of chart {self.name}")
        if not self.contains(point):
            raise ValueError(f"point {dict(point)} lies outside chart {self.name}")
        return {c: float(point[c]) for c in self.coords}

    def sample(self, n: int, rng: np.random.Generator | int | None = None,
               box: Sequence[tuple[float, float]] | None = None) -> dict[str, np.ndarray]:
        """``n`` points drawn uniformly from the box, rejecting constraint violations."""
        if self.dim == 0:
            return {}
        rng = np.random.default_rng(DEFAULT_SEED if rng is None else rng)
        box = tuple(box) if box is not None else self.intervals
        got: list[np.ndarray] = []
        count = 0
        for _ in range(64):
            m = max(2 * (n - count), 16)
            cols = []
            for lo, hi in box:
                u = rng.uniform(lo, hi, size=m)
                cols.append(u)
            pts = np.stack(cols)
            ok = np.ones(m, dtype=bool)
            for (lo, hi), col in zip(box, cols):
                ok &= (col > lo) & (col < hi)
            if self.constraints:
                p = {c: pts[i] for i, c in enumerate(self.coords)}
                for k in self.constraints:
                    ok &= k.holds(p, self.env)
            pts = pts[:, ok]
            if pts.shape[1]:
                got.append(pts)
                count += pts.shape[1]
            if count >= n:
                break
        if count == 0:
            raise SamplingError(f"chart {self.name}: all sample points rejected by constraints")
        if count < n:
            raise SamplingError(f"chart {self.name}: only {count} of {n} sample points satisfy the constraints")
        allpts = np.concatenate(got, axis=1)[:, :n]
        return {c: allpts[i] for i, c in enumerate(self.coords)}

    def sample_near(self, center: Mapping[str, float], n: int, radius: float,
                    rng: np.random.Generator | int | None = None) -> dict[str, np.ndarray]:
        box = []
        for c, (lo, hi) in zip(self.coords, self.intervals):
            x = float(center[c])
            box.append((max(lo, x - radius), min(hi, x + radius)))
        return self.sample(n, rng, box=box)


def sample_values(exprs: Sequence[Expr], chart: Chart, trials: int = DEFAULT_TRIALS,
                  seed: int = DEFAULT_SEED, env: Environment | None = None) -> np.ndarray:
    """Values of ``exprs`` on the chart's sample set, shape (len(exprs), samples).

    A zero-dimensional chart has a single point.
    """
    pts = chart.sample(trials, seed)
    vals = evaluate_many(list(exprs), pts, env or chart.env)
    return vals.reshape(len(exprs), -1)


def as_array(point: Mapping[str, np.ndarray], coords: Sequence[str]) -> np.ndarray:
    return np.stack([np.asarray(point[c], dtype=float) for c in coords])


def close(a, b, tol: float) -> np.ndarray:
    return np.abs(a - b) <= tol * (1 + np.maximum(np.abs(a), np.abs(b)))


def probably_equal(e1: Expr, e2: Expr, chart: Chart, trials: int = DEFAULT_TRIALS,
                   tol: float = DEFAULT_TOL, seed: int = DEFAULT_SEED) -> bool:
    """Randomized zero test of ``e1 - e2`` over the chart's sampling domain."""
    a, b = chart.normalize(e1), chart.normalize(e2)
    if a == b:
        return True
    pts = chart.sample(trials, seed)
    vals = evaluate_many([a, b], pts, chart.env)
    return bool(np.all(close(vals[0], vals[1], tol)))


def max_discrepancy(e1: Expr, e2: Expr, chart: Chart, trials: int = DEFAULT_TRIALS,
                    seed: int = DEFAULT_SEED) -> float:
    """Largest relative gap |a-b|/(1+max(|a|,|b|)) over the sample set."""
    d = chart.normalize(sub(e1, e2))
    if d.is_zero:
        return 0.0
    pts = chart.sample(trials, seed)
    vals = evaluate_many([e1, e2], pts, chart.env)
    gap = np.abs(vals[0] - vals[1]) / (1 + np.maximum(np.abs(vals[0]), np.abs(vals[1])))
    return float(np.max(gap))
