"""Compressed-sparse-row matrices and the kernels the model runs on them.

Kernels are compiled with numba and run single-threaded, so results are
bitwise reproducible for a given input.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np


@numba.njit(cache=True)
def _csr_matmul(indptr, indices, data, x):
    n = indptr.shape[0] - 1
    d = x.shape[1]
    out = np.zeros((n, d), dtype=x.dtype)
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            v = data[p]
            for c in range(d):
                out[i, c] += v * x[j, c]
    return out


@numba.njit(cache=True)
def _csr_t_matmul(indptr, indices, data, g, n_cols):
    n = indptr.shape[0] - 1
    d = g.shape[1]
    out = np.zeros((n_cols, d), dtype=g.dtype)
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            v = data[p]
            for c in range(d):
                out[j, c] += v * g[i, c]
    return out


@numba.njit(cache=True)
def _edge_dot(indptr, indices, a, b):
    # out[p] = <a[row(p)], b[col(p)]>
    n = indptr.shape[0] - 1
    d = a.shape[1]
    out = np.zeros(indices.shape[0], dtype=a.dtype)
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            s = 0.0
            for c in range(d):
                s += a[i, c] * b[j, c]
            out[p] = s
    return out


@numba.njit(cache=True)
def _symbolic_matmul(a_ptr, a_idx, b_ptr, b_idx, n_cols):
    n = a_ptr.shape[0] - 1
    mark = np.full(n_cols, -1, dtype=np.int64)
    counts = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        for p in range(a_ptr[i], a_ptr[i + 1]):
            j = a_idx[p]
            for q in range(b_ptr[j], b_ptr[j + 1]):
                c = b_idx[q]
                if mark[c] != i:
                    mark[c] = i
                    counts[i + 1] += 1
    indptr = np.cumsum(counts)
    indices = np.empty(indptr[n], dtype=np.int64)
    mark[:] = -1
    for i in range(n):
        pos = indptr[i]
        for p in range(a_ptr[i], a_ptr[i + 1]):
            j = a_idx[p]
            for q in range(b_ptr[j], b_ptr[j + 1]):
                c = b_idx[q]
                if mark[c] != i:
                    mark[c] = i
                    indices[pos] = c
                    pos += 1
        indices[indptr[i]:indptr[i + 1]] = np.sort(indices[indptr[i]:indptr[i + 1]])
    return indptr, indices


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Real matrix in CSR layout with sorted, unique column indices per row."""

    shape: tuple[int, int]
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        rows, cols = self.shape
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        data = np.ascontiguousarray(self.data)
        if data.dtype not in (np.float32, np.float64):
            data = data.astype(np.float64)
        if indptr.shape != (rows + 1,) or indptr[0] != 0:
            raise ValueError("row offsets must have length rows + 1 and start at 0")
        if np.any(np.diff(indptr) < 0):
            raise ValueError("row offsets must be non-decreasing")
        if indptr[-1] != indices.size or indices.size != data.size:
            raise ValueError("stored value count does not match last row offset")
        if indices.size:
            if indices.min() < 0 or indices.max() >= cols:
                raise ValueError("column index out of range")
            row_of = np.repeat(np.arange(rows), np.diff(indptr))
            same_row = row_of[1:] == row_of[:-1]
            if np.any(np.diff(indices)[same_row] <= 0):
                raise ValueError("column indices must be strictly increasing within a row")
        for arr in (indptr, indices, data):
            arr.setflags(write=False)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "shape", (int(rows), int(cols)))

    @classmethod
    def from_coo(cls, rows, cols, values, shape, *, sum_duplicates=False):
        """Build from coordinate triples. Duplicates keep one entry (or are summed)."""
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        values = np.broadcast_to(np.asarray(values, dtype=np.float64), rows.shape)
        n_rows, n_cols = shape
        if rows.size and (rows.min() < 0 or rows.max() >= n_rows):
            raise ValueError("row index out of range")
        if cols.size and (cols.min() < 0 or cols.max() >= n_cols):
            raise ValueError("column index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        if rows.size:
            first = np.ones(rows.size, dtype=bool)
            first[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            if sum_duplicates:
                group = np.cumsum(first) - 1
                values = np.bincount(group, weights=values)
            else:
                values = values[first]
            rows, cols = rows[first], cols[first]
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n_rows), out=indptr[1:])
        return cls((n_rows, n_cols), indptr, cols, values)

    @classmethod
    def from_dense(cls, dense):
        dense = np.asarray(dense)
        r, c = np.nonzero(dense)
        out = cls.from_coo(r, c, dense[r, c].astype(np.float64), dense.shape)
        if dense.dtype == np.float32:
            out = out.astype(np.float32)
        return out

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.shape[0], dtype=np.int64), np.diff(self.indptr))

    def row_degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def with_data(self, data) -> SparseMatrix:
        return SparseMatrix(self.shape, self.indptr, self.indices, np.asarray(data))

    def astype(self, dtype) -> SparseMatrix:
        return self.with_data(self.data.astype(dtype))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=self.data.dtype)
        out[self.row_ids(), self.indices] = self.data
        return out

    def transpose(self) -> SparseMatrix:
        return SparseMatrix.from_coo(self.indices, self.row_ids(), self.data, self.shape[::-1])

    def same_pattern(self, other: SparseMatrix) -> bool:
        return (self.shape == other.shape and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices))

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return self.same_pattern(other) and np.array_equal(self.data, other.data)

    __hash__ = None

    def is_symmetric(self) -> bool:
        return self.shape[0] == self.shape[1] and self.same_pattern(self.transpose())

    def matmul(self, x: np.ndarray, values: np.ndarray | None = None) -> np.ndarray:
        """Sparse times dense, optionally overriding the stored values."""
        x = np.ascontiguousarray(x)
        if x.ndim != 2 or x.shape[0] != self.shape[1]:
            raise ValueError(f"cannot multiply {self.shape} by {x.shape}")
        vals = self.data if values is None else values
        return _csr_matmul(self.indptr, self.indices, np.ascontiguousarray(vals, dtype=x.dtype), x)

    def rmatmul_t(self, g: np.ndarray, values: np.ndarray | None = None) -> np.ndarray:
        """Transpose(self) times dense g, without forming the transpose."""
        g = np.ascontiguousarray(g)
        if g.ndim != 2 or g.shape[0] != self.shape[0]:
            raise ValueError(f"cannot multiply transpose of {self.shape} by {g.shape}")
        vals = self.data if values is None else values
        return _csr_t_matmul(self.indptr, self.indices, np.ascontiguousarray(vals, dtype=g.dtype),
                             g, self.shape[1])

    def edge_dot(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """For every stored (i, j): <a[i], b[j]>."""
        a = np.ascontiguousarray(a)
        b = np.ascontiguousarray(b, dtype=a.dtype)
        return _edge_dot(self.indptr, self.indices, a, b)

    def pattern_matmul(self, other: SparseMatrix) -> SparseMatrix:
        """Binary support of self @ other (no cancellation: all values assumed positive)."""
        if self.shape[1] != other.shape[0]:
            raise ValueError("inner dimensions differ")
        indptr, indices = _symbolic_matmul(self.indptr, self.indices, other.indptr, other.indices,
                                           other.shape[1])
        return SparseMatrix((self.shape[0], other.shape[1]), indptr, indices,
                            np.ones(indices.size))

    def pattern_union(self, other: SparseMatrix) -> SparseMatrix:
        rows = np.concatenate([self.row_ids(), other.row_ids()])
        cols = np.concatenate([self.indices, other.indices])
        return SparseMatrix.from_coo(rows, cols, 1.0, self.shape)

    def drop_diagonal(self) -> SparseMatrix:
        rows = self.row_ids()
        keep = rows != self.indices
        return SparseMatrix.from_coo(rows[keep], self.indices[keep], self.data[keep], self.shape)
