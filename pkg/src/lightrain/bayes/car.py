"""Proper CAR prior on lattice cells: precision prec * (I - rho * B)."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def max_neighbors(B) -> int:
    B = sp.csr_matrix(B)
    return int(np.asarray(B.sum(axis=1)).max()) if B.shape[0] else 0


def rho_upper(B) -> float:
    """Exclusive upper bound 1/m on rho, m the largest neighbour count."""
    m = max_neighbors(B)
    return np.inf if m == 0 else 1.0 / m


def car_precision(B, rho: float, prec: float) -> sp.csr_matrix:
    """Sparse symmetric ``prec * (I - rho B)`` for a 0/1 adjacency ``B``."""
    B = sp.csr_matrix(B, dtype=float)
    if B.shape[0] != B.shape[1]:
        raise ValueError("adjacency must be square")
    if (B != B.T).nnz:
        raise ValueError("adjacency must be symmetric")
    if not prec > 0:
        raise ValueError("precision must be positive")
    if not 0 <= rho < rho_upper(B):
        raise ValueError(f"rho={rho} outside [0, 1/m) with m={max_neighbors(B)}")
    n = B.shape[0]
    return (prec * (sp.identity(n, format="csr") - rho * B)).tocsr()


def coloring(B) -> np.ndarray:
    """Greedy graph colouring; same-coloured sites are never neighbours."""
    B = sp.csr_matrix(B)
    n = B.shape[0]
    color = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        used = set(color[B.indices[B.indptr[i]:B.indptr[i + 1]]].tolist())
        c = 0
        while c in used:
            c += 1
        color[i] = c
    return color
