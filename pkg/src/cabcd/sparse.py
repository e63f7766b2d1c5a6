"""Sparse storage and kernels for the d x n data matrix.

X is stored feature-major: rows are features, columns are data points.
Kernels are thin wrappers over scipy.sparse that add the flop accounting
the solvers need.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO, Iterable, Optional, Protocol

import numpy as np
import scipy.sparse as sp


class FlopTally(Protocol):
    def add_flops(self, charged: int, actual: Optional[int] = None) -> None: ...


class LibsvmParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(eq=False)
class CsrMatrix:
    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    _scipy: Optional[sp.csr_matrix] = field(default=None, repr=False)

    def __post_init__(self):
        self.row_offsets = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        self.col_indices = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        self.n_rows = int(self.n_rows)
        self.n_cols = int(self.n_cols)

    @classmethod
    def from_scipy(cls, m) -> "CsrMatrix":
        m = sp.csr_matrix(m, dtype=np.float64)
        m.sum_duplicates()
        m.sort_indices()
        out = cls(m.shape[0], m.shape[1], m.indptr, m.indices, m.data)
        return out

    @classmethod
    def from_dense(cls, a) -> "CsrMatrix":
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        return cls.from_scipy(sp.csr_matrix(a))

    @classmethod
    def empty(cls, n_rows: int = 0, n_cols: int = 0) -> "CsrMatrix":
        return cls(n_rows, n_cols, np.zeros(n_rows + 1, np.int64),
                   np.zeros(0, np.int64), np.zeros(0))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1]) if self.row_offsets.size else 0

    @property
    def density(self) -> float:
        if self.n_rows == 0 or self.n_cols == 0:
            return 0.0
        return self.nnz / (self.n_rows * self.n_cols)

    def row_nnz(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def to_scipy(self) -> sp.csr_matrix:
        # shares the arrays; never mutate the result
        if self._scipy is None:
            self._scipy = sp.csr_matrix(
                (self.values, self.col_indices, self.row_offsets),
                shape=self.shape, copy=False)
        return self._scipy

    def toarray(self) -> np.ndarray:
        return self.to_scipy().toarray()

    @cached_property
    def T(self) -> "CsrMatrix":
        """Transpose, itself stored as CSR (i.e. the CSC form of this matrix)."""
        t = self.to_scipy().T.tocsr()
        t.sort_indices()
        return CsrMatrix(self.n_cols, self.n_rows, t.indptr, t.indices, t.data)

    def validate(self) -> None:
        ro, ci = self.row_offsets, self.col_indices
        if ro.shape != (self.n_rows + 1,) or ro[0] != 0:
            raise ValueError("row_offsets must have length n_rows+1 and start at 0")
        if np.any(np.diff(ro) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        if ro[-1] != ci.size or ci.size != self.values.size:
            raise ValueError("row_offsets[-1] must equal the number of stored values")
        if ci.size and (ci.min() < 0 or ci.max() >= self.n_cols):
            raise ValueError("column index out of range")
        if ci.size > 1:
            crosses_row = np.zeros(ci.size - 1, dtype=bool)
            starts = ro[1:-1]
            starts = starts[(starts > 0) & (starts < ci.size)]
            crosses_row[starts - 1] = True
            if np.any((np.diff(ci) <= 0) & ~crosses_row):
                raise ValueError("column indices must be strictly increasing within a row")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite stored value")


@dataclass(frozen=True, eq=False)
class BlockSelector:
    """Sorted, duplicate-free sample of b indices out of ``universe_size``."""

    indices: np.ndarray
    universe_size: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size < 1:
            raise ValueError("selector must hold at least one index")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("selector indices must be strictly increasing")
        if idx[0] < 0 or idx[-1] >= self.universe_size:
            raise IndexError(
                f"selector index out of range for universe of size {self.universe_size}")
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return int(self.indices.size)

    def __eq__(self, other) -> bool:
        return (isinstance(other, BlockSelector)
                and self.universe_size == other.universe_size
                and np.array_equal(self.indices, other.indices))

    def __hash__(self):
        return hash((self.universe_size, self.indices.tobytes()))


# ---------------------------------------------------------------- LIBSVM I/O

def parse_libsvm(stream: IO[str] | Iterable[str] | str,
                 expected_features: Optional[int] = None):
    """Read LIBSVM text into a feature-major CSR matrix and a label vector.

    Line ``i`` (0-based, blank lines skipped) becomes column ``i``; token
    ``k:v`` becomes entry ``(k-1, i)``. Returns ``(X, y)``.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    feats: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    labels: list[float] = []
    max_feat = 0
    n = 0
    for line_no, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise LibsvmParseError(line_no, f"bad label {tokens[0]!r}") from None
        if not math.isfinite(label):
            raise LibsvmParseError(line_no, "non-finite label")
        prev = 0
        for tok in tokens[1:]:
            k, sep, v = tok.partition(":")
            if not sep:
                raise LibsvmParseError(line_no, f"malformed token {tok!r}")
            try:
                idx = int(k)
                val = float(v)
            except ValueError:
                raise LibsvmParseError(line_no, f"malformed token {tok!r}") from None
            if idx < 1:
                raise LibsvmParseError(line_no, f"feature index {idx} is not 1-based")
            if idx <= prev:
                raise LibsvmParseError(line_no, f"feature indices not increasing at {tok!r}")
            if expected_features is not None and idx > expected_features:
                raise LibsvmParseError(
                    line_no, f"feature index {idx} exceeds expected {expected_features}")
            if not math.isfinite(val):
                raise LibsvmParseError(line_no, f"non-finite value in {tok!r}")
            prev = idx
            feats.append(idx - 1)
            cols.append(n)
            vals.append(val)
        max_feat = max(max_feat, prev)
        labels.append(label)
        n += 1

    d = expected_features if expected_features is not None else max_feat
    rows = np.asarray(feats, dtype=np.int64)
    order = np.argsort(rows, kind="stable")   # stable keeps columns ascending per row
    counts = np.bincount(rows, minlength=d) if rows.size else np.zeros(d, np.int64)
    offsets = np.zeros(d + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    X = CsrMatrix(d, n, offsets,
                  np.asarray(cols, dtype=np.int64)[order],
                  np.asarray(vals, dtype=np.float64)[order])
    return X, np.asarray(labels, dtype=np.float64)


def write_libsvm(X: CsrMatrix, y: np.ndarray, stream: IO[str]) -> None:
    """Inverse of :func:`parse_libsvm`; values are written with ``repr``
    so a re-parse is bit-exact."""
    Xt = X.T  # one row per data point
    for j in range(X.n_cols):
        lo, hi = Xt.row_offsets[j], Xt.row_offsets[j + 1]
        parts = [repr(float(y[j]))]
        parts.extend(f"{k + 1}:{v!r}" for k, v in
                     zip(Xt.col_indices[lo:hi].tolist(), Xt.values[lo:hi].tolist()))
        stream.write(" ".join(parts) + "\n")


# ------------------------------------------------------------------ kernels

def _charge(tally, charged, actual=None):
    if tally is not None:
        tally.add_flops(int(charged), None if actual is None else int(actual))


_SMALL_NNZ = 1 << 16


def spmv(X: CsrMatrix, v: np.ndarray, tally: Optional[FlopTally] = None) -> np.ndarray:
    """X @ v; charges 2*nnz flops."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (X.n_cols,):
        raise ValueError(f"spmv: vector length {v.shape} does not match {X.n_cols} columns")
    _charge(tally, 2 * X.nnz)
    if X._scipy is None and X.nnz <= _SMALL_NNZ:
        rows = np.repeat(np.arange(X.n_rows), np.diff(X.row_offsets))
        return np.bincount(rows, weights=X.values * v[X.col_indices], minlength=X.n_rows)
    return X.to_scipy() @ v


def spmv_t(X: CsrMatrix, v: np.ndarray, tally: Optional[FlopTally] = None) -> np.ndarray:
    """X.T @ v; charges 2*nnz flops."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (X.n_rows,):
        raise ValueError(f"spmv_t: vector length {v.shape} does not match {X.n_rows} rows")
    _charge(tally, 2 * X.nnz)
    if X._scipy is None and X.nnz <= _SMALL_NNZ:
        # fresh small blocks: skip building a scipy object per call
        w = X.values * np.repeat(v, np.diff(X.row_offsets))
        return np.bincount(X.col_indices, weights=w, minlength=X.n_cols)
    return X.to_scipy().T @ v


def _take_rows(X: CsrMatrix, rows: np.ndarray) -> CsrMatrix:
    ro = X.row_offsets
    starts = ro[rows]
    lens = ro[rows + 1] - starts
    offsets = np.zeros(rows.size + 1, dtype=np.int64)
    np.cumsum(lens, out=offsets[1:])
    total = int(offsets[-1])
    if total:
        # gather positions: starts[r] + 0..lens[r]-1, vectorised
        pos = np.arange(total, dtype=np.int64) - np.repeat(offsets[:-1] - starts, lens)
        ci, vals = X.col_indices[pos], X.values[pos]
    else:
        ci, vals = np.zeros(0, np.int64), np.zeros(0)
    return CsrMatrix(rows.size, X.n_cols, offsets, ci, vals)


def extract_rows(X: CsrMatrix, sel: BlockSelector | np.ndarray) -> CsrMatrix:
    """The b x n matrix whose row j is row ``sel[j]`` of X."""
    if isinstance(sel, BlockSelector):
        if sel.universe_size != X.n_rows:
            raise ValueError("selector universe does not match the row count")
        rows = sel.indices
    else:
        rows = np.asarray(sel, dtype=np.int64)
        if rows.size and (rows.min() < 0 or rows.max() >= X.n_rows):
            raise IndexError("row index out of range")
    return _take_rows(X, rows)


def extract_cols(X: CsrMatrix, sel: BlockSelector | np.ndarray) -> CsrMatrix:
    """The d x b matrix whose column j is column ``sel[j]`` of X."""
    if isinstance(sel, BlockSelector):
        if sel.universe_size != X.n_cols:
            raise ValueError("selector universe does not match the column count")
    return extract_rows(X.T, sel).T


def _mirror_upper(g: np.ndarray) -> np.ndarray:
    iu = np.triu_indices(g.shape[0], 1)
    g[(iu[1], iu[0])] = g[iu]
    return g


_DENSE_GRAM_LIMIT = 1 << 21


def gram_rows(Y: CsrMatrix, scale: float, tally: Optional[FlopTally] = None) -> np.ndarray:
    """scale * Y @ Y.T as a dense, exactly symmetric matrix.

    Charged 2*m*nnz(Y) flops for an m-row Y; the actual multiply-add count
    (sum of squared column occupancies) is reported alongside.
    """
    m = Y.n_rows
    if m == 0:
        raise ValueError("gram_rows: empty block")
    if Y.nnz == 0:
        g = np.zeros((m, m))
        col_counts = np.zeros(0, dtype=np.int64)
    else:
        # compact onto the touched columns; dense product when that is small,
        # which avoids scipy construction overhead for the usual tiny blocks
        cols, inv, col_counts = np.unique(Y.col_indices, return_inverse=True,
                                          return_counts=True)
        if m * len(cols) <= _DENSE_GRAM_LIMIT:
            D = np.zeros((m, len(cols)))
            D[np.repeat(np.arange(m), np.diff(Y.row_offsets)), inv] = Y.values
            g = D @ D.T
        else:
            S = Y.to_scipy()
            g = (S @ S.T).toarray()
    g *= scale
    if tally is not None:
        _charge(tally, 2 * m * Y.nnz, 2 * int(np.dot(col_counts, col_counts)))
    return _mirror_upper(g)


def gram_cols(Y: CsrMatrix, scale: float, tally: Optional[FlopTally] = None) -> np.ndarray:
    """scale * Y.T @ Y; column analogue of :func:`gram_rows`."""
    return gram_rows(Y.T, scale, tally)


def is_symmetric(A: np.ndarray, rtol: float = 1e-12) -> bool:
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        return False
    scale = np.max(np.abs(A)) if A.size else 0.0
    return bool(np.max(np.abs(A - A.T), initial=0.0) <= rtol * scale)


def condition_number(A: np.ndarray) -> float:
    """2-norm condition number of a symmetric matrix via its eigenvalues.

    Returns inf when the smallest eigenvalue is non-positive relative to
    1e-14 times the largest.
    """
    A = np.asarray(A, dtype=np.float64)
    if not is_symmetric(A):
        raise ValueError("condition_number expects a symmetric matrix")
    ev = np.linalg.eigvalsh(A)
    hi = np.max(np.abs(ev))
    lo = ev[0]
    if hi == 0.0 or lo <= 1e-14 * hi:
        return math.inf
    return float(hi / lo)
