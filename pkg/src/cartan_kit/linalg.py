"""Small numeric helpers shared by the analysis modules."""

from __future__ import annotations

import numpy as np

RANK_RTOL = 1e-8


def numeric_rank(m: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray | int:
    """Rank of a matrix (or a stack of matrices on the leading axes).

    Singular values count when they exceed ``rtol`` times the largest one,
    with the largest floored at 1 so that a matrix of pure roundoff has rank 0.
    """
    m = np.asarray(m, dtype=float)
    if m.shape[-1] == 0 or m.shape[-2] == 0:
        return np.zeros(m.shape[:-2], dtype=int) if m.ndim > 2 else 0
    s = np.linalg.svd(m, compute_uv=False)
    scale = np.maximum(s[..., :1], 1.0)
    r = np.sum(s > rtol * scale, axis=-1)
    return int(r) if m.ndim == 2 else r


def kernel_basis(m: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal basis (columns) of ker m with the first nonzero entry of each column positive."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    n = m.shape[1]
    if m.shape[0] == 0:
        basis = np.eye(n)
    else:
        _, s, vt = np.linalg.svd(m)
        r = int(np.sum(s > rtol * max(s[0] if s.size else 0.0, 1.0)))
        basis = vt[r:].T.copy()
    return orient_columns(basis)


def orient_columns(basis: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    basis = np.array(basis, dtype=float)
    for j in range(basis.shape[1]):
        col = basis[:, j]
        nz = np.flatnonzero(np.abs(col) > eps)
        if nz.size and col[nz[0]] < 0:
            basis[:, j] = -col
    return basis
