"""Development of paths through a pair of coframes, and loop monodromy."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .forms import DifferentialForm
from .symbolic import Chart, Expr, diff, evaluate_many

DEFAULT_STEPS = 2000


class PathError(ValueError):
    pass


class SingularTarget(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FormSystem:
    """Pointwise-independent 1-forms on a chart, possibly fewer than its dimension."""

    chart: Chart
    forms: tuple[DifferentialForm, ...]
    name: str = "theta"

    def __post_init__(self):
        if not self.forms:
            raise ValueError(f"form system {self.name} is empty")
        if len(self.forms) > self.chart.dim:
            raise ValueError(f"form system {self.name} has more forms than chart dimensions")
        for f in self.forms:
            if f.degree != 1 or f.chart != self.chart:
                raise ValueError(f"form system {self.name}: members must be 1-forms on chart {self.chart.name}")

    @property
    def n(self) -> int:
        return len(self.forms)

    @property
    def matrix(self) -> list[list[Expr]]:
        return [f.components() for f in self.forms]


@dataclass(frozen=True, eq=False)
class PathSpec:
    """A path on [0, 1]: piecewise linear through waypoints, or closed-form curve expressions in ``param``."""

    coords: tuple[str, ...]
    waypoints: tuple[tuple[float, ...], ...] = ()
    curve: Mapping[str, Expr] | None = None
    param: str = "s"
    steps: int = DEFAULT_STEPS

    def __post_init__(self):
        if (self.curve is None) == (not self.waypoints):
            raise PathError("a path needs either waypoints or curve expressions")
        if self.waypoints:
            if len(self.waypoints) < 2:
                raise PathError("a waypoint path needs at least two points")
            if any(len(w) != len(self.coords) for w in self.waypoints):
                raise PathError("every waypoint must give all coordinates")
        else:
            missing = [c for c in self.coords if c not in self.curve]
            if missing:
                raise PathError(f"curve is missing coordinates {missing}")
        if self.steps < 4:
            raise PathError("at least 4 steps are required")

    def with_steps(self, steps: int) -> "PathSpec":
        return PathSpec(self.coords, self.waypoints, self.curve, self.param, steps)

    @property
    def segments(self) -> int:
        return len(self.waypoints) - 1 if self.waypoints else 1

    def breakpoints(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.segments + 1)

    def evaluate(self, s: np.ndarray, seg: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Points and velocities (shape (len(s), dim)); ``seg`` pins the linear piece for each s."""
        s = np.asarray(s, dtype=float)
        if self.curve is not None:
            ex = [self.curve[c] for c in self.coords]
            ds = [diff(e, self.param) for e in ex]
            vals = evaluate_many(ex + ds, {self.param: s})
            k = len(ex)
            return vals[:k].T, vals[k:].T
        W = np.asarray(self.waypoints, dtype=float)
        m = self.segments
        if seg is None:
            seg = np.clip(np.floor(s * m).astype(int), 0, m - 1)
        vel = (W[seg + 1] - W[seg]) * m
        pos = W[seg] + (s - seg / m)[:, None] * vel
        return pos, vel

    def start(self) -> dict[str, float]:
        pos, _ = self.evaluate(np.array([0.0]))
        return dict(zip(self.coords, pos[0]))

    def is_closed(self, tol: float = 1e-10) -> bool:
        pos, _ = self.evaluate(np.array([0.0, 1.0]))
        return float(np.max(np.abs(pos[0] - pos[1]))) <= tol


@dataclass
class Development:
    s: np.ndarray
    gamma: np.ndarray  # (N+1, dim M)
    gamma_dot: np.ndarray
    phi: np.ndarray  # (N+1, dim target)
    segments: list[tuple[int, int]] = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.phi[-1]


def _matrix_fn(system, names: Sequence[str]):
    chart = system.chart
    flat = [e for row in system.matrix for e in row]
    n, m = len(system.matrix), chart.dim

    def fn(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        vals = evaluate_many(flat, {c: x[:, i] for i, c in enumerate(names)}, chart.env)
        return np.moveaxis(vals.reshape(n, m, -1), -1, 0)

    return fn


def _inside(chart: Chart, x: np.ndarray) -> bool:
    return chart.contains(dict(zip(chart.coords, x)))


def develop_along_path(src, tgt, p0: Mapping[str, float], q0: Mapping[str, float], path: PathSpec,
                       steps: int | None = None) -> Development:
    """Integrate phi' = Theta_tgt(phi)^-1 Theta_src(gamma) gamma' by fixed-step RK4.

    ``src`` may be a Coframe or a FormSystem with as many forms as the target has.
    """
    if src.n != tgt.n or tgt.n != tgt.chart.dim:
        raise ValueError(f"source has {src.n} forms; target must be a coframe of the same size")
    if tuple(path.coords) != tuple(src.chart.coords):
        raise PathError(f"path coordinates {path.coords} do not match chart {src.chart.name}")
    N = steps or path.steps
    m = path.segments
    if N % m:
        N += m - N % m  # keep breakpoints on the grid
    start = path.start()
    p0v = np.array([float(p0[c]) for c in src.chart.coords])
    if np.max(np.abs(p0v - np.array([start[c] for c in src.chart.coords]))) > 1e-9:
        raise PathError("path does not start at p0")
    q = np.array([float(q0[c]) for c in tgt.chart.coords])
    if not _inside(tgt.chart, q):
        raise PathError(f"q0 {dict(q0)} lies outside chart {tgt.chart.name}")

    s = np.linspace(0.0, 1.0, N + 1)
    h = 1.0 / N
    per = N // m
    seg_node = np.minimum(np.arange(N) // per, m - 1)
    # source side: velocity in the target frame at nodes and midpoints, per step
    s_all = np.concatenate([s[:-1], s[:-1] + h / 2, s[1:]])
    seg_all = np.concatenate([seg_node] * 3)
    pos, vel = path.evaluate(s_all, seg_all)
    for x in pos[::max(1, len(pos) // 512)]:
        if not _inside(src.chart, x):
            raise PathError(f"path leaves chart {src.chart.name} at {dict(zip(src.chart.coords, x))}")
    Ts = _matrix_fn(src, src.chart.coords)(pos)
    w = np.einsum("sij,sj->si", Ts, vel)
    w0, wm, w1 = w[:N], w[N:2 * N], w[2 * N:]
    Tt = _matrix_fn(tgt, tgt.chart.coords)

    def rhs(x, wv):
        M = Tt(x)[0]
        try:
            return np.linalg.solve(M, wv)
        except np.linalg.LinAlgError as exc:
            raise SingularTarget(f"target coframe singular at {dict(zip(tgt.chart.coords, x))}") from exc

    phi = np.empty((N + 1, len(q)))
    phi[0] = q
    x = q
    for i in range(N):
        k1 = rhs(x, w0[i])
        k2 = rhs(x + h / 2 * k1, wm[i])
        k3 = rhs(x + h / 2 * k2, wm[i])
        k4 = rhs(x + h * k3, w1[i])
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)) or not _inside(tgt.chart, x):
            raise PathError(f"developed path leaves chart {tgt.chart.name} near s={s[i + 1]:.4g}")
        phi[i + 1] = x
    gpos, gvel = path.evaluate(s, np.minimum(np.arange(N + 1) // per, m - 1))
    bounds = [(k * per, (k + 1) * per) for k in range(m)]
    return Development(s, gpos, gvel, phi, bounds)


_CENTER = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_EDGE0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_EDGE1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


def _derivative(y: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order finite-difference derivative along axis 0 (one-sided at the ends)."""
    n = len(y)
    if n < 5:
        raise ValueError("need at least 5 samples per segment")
    out = np.empty_like(y)
    out[2:-2] = np.tensordot(_CENTER, np.stack([y[i:n - 4 + i] for i in range(5)]), axes=1)
    out[0] = _EDGE0 @ y[:5]
    out[1] = _EDGE1 @ y[:5]
    out[-1] = -(_EDGE0 @ y[::-1][:5])
    out[-2] = -(_EDGE1 @ y[::-1][:5])
    return out / h


def pullback_residual(src, tgt, dev: Development) -> float:
    """max_s |Theta_src(gamma) gamma' - Theta_tgt(phi) phi'| / |gamma'|, with phi' by finite differences."""
    h = dev.s[1] - dev.s[0]
    worst = 0.0
    Ts = _matrix_fn(src, src.chart.coords)
    Tt = _matrix_fn(tgt, tgt.chart.coords)
    for a, b in dev.segments or [(0, len(dev.s) - 1)]:
        sl = slice(a, b + 1)
        dphi = _derivative(dev.phi[sl], h)
        lhs = np.einsum("sij,sj->si", Ts(dev.gamma[sl]), dev.gamma_dot[sl])
        rhs = np.einsum("sij,sj->si", Tt(dev.phi[sl]), dphi)
        speed = np.maximum(np.linalg.norm(dev.gamma_dot[sl], axis=1), 1e-300)
        worst = max(worst, float(np.max(np.linalg.norm(lhs - rhs, axis=1) / speed)))
    return worst


def path_independence_defect(src, tgt, p0, q0, path1: PathSpec, path2: PathSpec, steps: int | None = None) -> float:
    """Distance between the endpoints developed along two paths with common ends."""
    e1, _ = path1.evaluate(np.array([1.0]))
    e2, _ = path2.evaluate(np.array([1.0]))
    if np.max(np.abs(e1 - e2)) > 1e-9:
        raise PathError("paths do not share their endpoint")
    d1 = develop_along_path(src, tgt, p0, q0, path1, steps)
    d2 = develop_along_path(src, tgt, p0, q0, path2, steps)
    return float(np.linalg.norm(d1.final - d2.final))


def monodromy_defect(src, tgt, loop: PathSpec, q0: Mapping[str, float], steps: int | None = None) -> float:
    """Distance between q0 and the endpoint developed around a closed loop."""
    if not loop.is_closed():
        raise PathError("monodromy needs a closed loop")
    dev = develop_along_path(src, tgt, loop.start(), q0, loop, steps)
    q = np.array([float(q0[c]) for c in tgt.chart.coords])
    return float(np.linalg.norm(dev.final - q))


def convergence_ratios(src, tgt, p0, q0, path: PathSpec, steps: Sequence[int]) -> tuple[list[float], list[float]]:
    """Pullback residuals at each step count and the ratios between successive refinements."""
    res = [pullback_residual(src, tgt, develop_along_path(src, tgt, p0, q0, path, N)) for N in steps]
    ratios = [a / b if b > 0 else float("inf") for a, b in zip(res, res[1:])]
    return res, ratios
