"""Sparse matrix helpers on top of scipy.sparse."""
from __future__ import annotations

import warnings

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError


class TripletBuffer:
    """Collects (row, col, value) triplets in chunks; duplicates are summed on compression."""

    def __init__(self, n: int):
        self.n = n
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []

    def add(self, rows, cols, vals) -> None:
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=float).ravel()
        if not (len(rows) == len(cols) == len(vals)):
            raise ValueError("triplet arrays must have equal length")
        self._rows.append(rows)
        self._cols.append(cols)
        self._vals.append(vals)

    def add_outer(self, idx_v, coef_v, idx_w, coef_w, weights) -> None:
        """Add sum_q weights[q] * (coef_v[q] e_{idx_v[q]}) (coef_w[q] e_{idx_w[q]})^T.

        Row index comes from the test side (w), column index from the trial side (v).
        """
        m = (weights[:, None, None] * coef_w[:, :, None] * coef_v[:, None, :])
        r = np.broadcast_to(idx_w[:, :, None], m.shape)
        c = np.broadcast_to(idx_v[:, None, :], m.shape)
        self.add(r, c, m)

    def extend(self, other: "TripletBuffer") -> None:
        self._rows += other._rows
        self._cols += other._cols
        self._vals += other._vals

    def __len__(self) -> int:
        return int(sum(len(r) for r in self._rows))

    def compress(self) -> sp.csr_matrix:
        return compress(self)


def compress(buf: TripletBuffer) -> sp.csr_matrix:
    if buf._rows:
        rows = np.concatenate(buf._rows)
        cols = np.concatenate(buf._cols)
        vals = np.concatenate(buf._vals)
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
    A = sp.coo_matrix((vals, (rows, cols)), shape=(buf.n, buf.n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def matvec(A, x) -> np.ndarray:
    return np.asarray(A @ np.asarray(x, dtype=float))


def _find_pivot(A) -> int:
    """Index of the first vanishing pivot of a partially pivoted dense LU."""
    dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lu, _ = scipy.linalg.lu_factor(dense, check_finite=False)
    diag = np.abs(np.diag(lu))
    scale = max(np.abs(dense).max(), 1.0)
    bad = np.flatnonzero(diag <= 1e-14 * scale * len(diag))
    return int(bad[0]) if len(bad) else int(np.argmin(diag))


def solve_lu(A, b) -> np.ndarray:
    """Solve A x = b with a sparse LU; raise SolverError naming the failing pivot."""
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] == 0:
        return np.zeros(0)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            lu = spla.splu(A)
            x = lu.solve(b)
    except (RuntimeError, spla.MatrixRankWarning) as err:
        piv = _find_pivot(A) if A.shape[0] <= 5000 else None
        raise SolverError(f"singular system matrix (pivot {piv}): {err}", pivot=piv) from None
    if not np.all(np.isfinite(x)):
        piv = _find_pivot(A) if A.shape[0] <= 5000 else None
        raise SolverError(f"non-finite solution, matrix numerically singular (pivot {piv})", pivot=piv)
    return x


def dump_matrix_market(A, path, comment: str = "") -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment, precision=17)
