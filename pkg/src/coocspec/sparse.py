"""Compressed sparse row storage for binary user x item interaction data.

Gram products (X^T X, X X^T) are only ever applied in operator form through
:func:`matvec` / :func:`rmatvec`; nothing here materializes them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Operand shapes do not conform."""


@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    """Immutable CSR matrix.

    ``row_offsets[i]:row_offsets[i+1]`` indexes the entries of row ``i`` in
    ``col_indices`` / ``values``.  Columns are strictly increasing inside a row.
    """

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ro = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        ci = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        va = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError("negative dimension")
        if ro.shape != (self.n_rows + 1,):
            raise ValueError("row_offsets must have length n_rows + 1")
        nnz = ci.shape[0]
        if va.shape != (nnz,):
            raise ValueError("values and col_indices differ in length")
        if ro[0] != 0 or ro[-1] != nnz or np.any(np.diff(ro) < 0):
            raise ValueError("row_offsets must be non-decreasing from 0 to nnz")
        rid = np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(ro))
        if nnz:
            if ci.min() < 0 or ci.max() >= self.n_cols:
                raise ValueError("column index out of range")
            same_row = rid[1:] == rid[:-1]
            if np.any(np.diff(ci)[same_row] <= 0):
                raise ValueError("column indices must be strictly increasing within each row")
            if not np.all(np.isfinite(va)) or np.any(va <= 0):
                raise ValueError("values must be finite and positive")
        for a in (ro, ci, va, rid):
            a.setflags(write=False)
        object.__setattr__(self, "row_offsets", ro)
        object.__setattr__(self, "col_indices", ci)
        object.__setattr__(self, "values", va)
        object.__setattr__(self, "_row_ids", rid)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return int(self.col_indices.shape[0])

    @property
    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry (the COO row array)."""
        return self._row_ids

    def row(self, i: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[i]:self.row_offsets[i + 1]]

    def row_counts(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    @classmethod
    def from_coo(cls, rows, cols, shape, values=None) -> "InteractionMatrix":
        """Build from coordinate triples; duplicate (row, col) pairs collapse to one entry.

        Collapsed duplicates keep the largest value (1.0 for binarized data).
        """
        n, m = shape
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.ones(rows.shape[0]) if values is None else np.asarray(values, dtype=np.float64)
        if not (rows.shape == cols.shape == vals.shape):
            raise ValueError("rows, cols and values must have equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= n):
            raise ValueError("row index out of range")
        order = np.lexsort((vals, cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            # last of each (row, col) run carries the max value
            last = np.ones(rows.size, dtype=bool)
            last[:-1] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            rows, cols, vals = rows[last], cols[last], vals[last]
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=offsets[1:])
        return cls(n, m, offsets, cols, vals)

    @classmethod
    def from_dense(cls, a) -> "InteractionMatrix":
        a = np.asarray(a, dtype=np.float64)
        r, c = np.nonzero(a)
        return cls.from_coo(r, c, a.shape, a[r, c])

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row_ids, self.col_indices] = self.values
        return out

    def to_scipy(self):
        import scipy.sparse as sp

        return sp.csr_matrix((self.values, self.col_indices, self.row_offsets), shape=self.shape)

    def __eq__(self, other):
        if not isinstance(other, InteractionMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    def __repr__(self):
        return f"InteractionMatrix(shape={self.shape}, nnz={self.nnz})"


def _check_vec(v, size, what):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != size:
        raise DimensionError(f"{what} must be a vector of length {size}, got shape {v.shape}")
    return v


def matvec(X: InteractionMatrix, v) -> np.ndarray:
    """``X @ v``."""
    v = _check_vec(v, X.n_cols, "v")
    return np.bincount(X.row_ids, weights=X.values * v[X.col_indices], minlength=X.n_rows)


def rmatvec(X: InteractionMatrix, u) -> np.ndarray:
    """``X.T @ u`` without forming the transpose."""
    u = _check_vec(u, X.n_rows, "u")
    return np.bincount(X.col_indices, weights=X.values * u[X.row_ids], minlength=X.n_cols)


def gram_matvec(X: InteractionMatrix, v) -> np.ndarray:
    """Item-item co-occurrence product ``X.T @ (X @ v)``."""
    return rmatvec(X, matvec(X, v))


def gram_rmatvec(X: InteractionMatrix, u) -> np.ndarray:
    """User-user co-occurrence product ``X @ (X.T @ u)``."""
    return matvec(X, rmatvec(X, u))


def column_counts(X: InteractionMatrix) -> np.ndarray:
    """Nonzeros per column; item popularity for binary data."""
    return np.bincount(X.col_indices, minlength=X.n_cols).astype(np.int64)


def transpose(X: InteractionMatrix) -> InteractionMatrix:
    # stable sort by column keeps row order ascending within each new row
    order = np.argsort(X.col_indices, kind="stable")
    offsets = np.zeros(X.n_cols + 1, dtype=np.int64)
    np.cumsum(column_counts(X), out=offsets[1:])
    return InteractionMatrix(X.n_cols, X.n_rows, offsets, X.row_ids[order], X.values[order])


def select_entries(X: InteractionMatrix, keep: np.ndarray) -> InteractionMatrix:
    """Submatrix of the same shape holding only entries where ``keep`` (length nnz) is true."""
    keep = np.asarray(keep, dtype=bool)
    if keep.shape != (X.nnz,):
        raise DimensionError("keep mask must have length nnz")
    offsets = np.zeros(X.n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(X.row_ids[keep], minlength=X.n_rows), out=offsets[1:])
    return InteractionMatrix(X.n_rows, X.n_cols, offsets, X.col_indices[keep], X.values[keep])
