"""Random expressions paired with plain-numpy evaluators, used as independent oracles."""

from __future__ import annotations

import numpy as np

from cartan_kit.symbolic import Chart, Const, add, cos, evaluate_many, exp, mul, power, sin, sym
from fractions import Fraction


def random_expr(rng: np.random.Generator, names, depth: int = 3):
    """(Expr, numpy function of a dict of arrays) built from the same random tree."""
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.6:
            v = str(rng.choice(list(names)))
            return sym(v), (lambda p, v=v: np.asarray(p[v], dtype=float))
        q = Fraction(int(rng.integers(-4, 5)), int(rng.integers(1, 4)))
        return Const(q), (lambda p, q=q: float(q))
    op = rng.choice(["add", "mul", "sin", "cos", "exp", "pow", "inv"])
    a, fa = random_expr(rng, names, depth - 1)
    if op in ("add", "mul"):
        b, fb = random_expr(rng, names, depth - 1)
        if op == "add":
            return add(a, b), (lambda p: fa(p) + fb(p))
        return mul(a, b), (lambda p: fa(p) * fb(p))
    if op == "sin":
        return sin(a), (lambda p: np.sin(fa(p)))
    if op == "cos":
        return cos(a), (lambda p: np.cos(fa(p)))
    if op == "exp":
        # keep magnitudes moderate
        return exp(mul(Const(Fraction(1, 4)), sin(a))), (lambda p: np.exp(0.25 * np.sin(fa(p))))
    if op == "pow":
        k = int(rng.integers(2, 4))
        return power(a, k), (lambda p: fa(p) ** k)
    # 1/(1 + a^2) never divides by zero
    return power(add(Const(1), power(a, 2)), -1), (lambda p: 1.0 / (1.0 + fa(p) ** 2))


def box(name: str, coords, lo: float = -1.0, hi: float = 1.0, **kw) -> Chart:
    return Chart(name, tuple(coords), tuple((lo, hi) for _ in coords), **kw)


def rel_gap(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / (1 + np.maximum(np.abs(a), np.abs(b)))))


def numeric_structure(theta, p: dict, h=1e-5) -> np.ndarray:
    """C[k,i,j] = -theta^k([X_i, X_j]) with the dual frame differentiated by central differences."""
    coords = theta.chart.coords
    flat = [e for row in theta.matrix for e in row]
    n = theta.n

    def mat(q):
        return evaluate_many(flat, {c: np.array([q[c]]) for c in coords}, theta.chart.env)[:, 0].reshape(n, n)

    T = mat(p)
    X = np.linalg.inv(T)  # columns are the dual fields
    dX = np.empty((n, n, n))  # dX[a] = d X / d x_a
    for a, c in enumerate(coords):
        up, dn = dict(p), dict(p)
        up[c] += h
        dn[c] -= h
        dX[a] = (np.linalg.inv(mat(up)) - np.linalg.inv(mat(dn))) / (2 * h)
    C = np.zeros((n, n, n))
    for i in range(n):
        for j in range(n):
            br = np.einsum("a,ab->b", X[:, i], dX[:, :, j]) - np.einsum("a,ab->b", X[:, j], dX[:, :, i])
            C[:, i, j] = -T @ br
    return C
