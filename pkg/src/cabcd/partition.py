"""1D-block row / column partitioning of X over P logical ranks."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .sparse import BlockSelector, CsrMatrix, extract_rows


class LayoutKind(str, enum.Enum):
    ROW = "row"        # 1D-block row: each rank owns a range of features
    COLUMN = "col"     # 1D-block column: each rank owns a range of data points


@dataclass(frozen=True, eq=False)
class Layout:
    kind: LayoutKind
    P: int
    boundaries: np.ndarray

    @classmethod
    def even(cls, kind, P: int, dim: int) -> "Layout":
        if P < 1:
            raise ValueError("rank count must be >= 1")
        q, r = divmod(dim, P)
        sizes = np.full(P, q, dtype=np.int64)
        sizes[:r] += 1
        b = np.zeros(P + 1, dtype=np.int64)
        np.cumsum(sizes, out=b[1:])
        return cls(LayoutKind(kind), P, b)

    @property
    def dim(self) -> int:
        return int(self.boundaries[-1])

    def range_of(self, rank: int) -> tuple[int, int]:
        return int(self.boundaries[rank]), int(self.boundaries[rank + 1])

    def owner(self, idx) -> np.ndarray:
        """Rank owning each global index."""
        return np.searchsorted(self.boundaries, idx, side="right") - 1

    def sizes(self) -> np.ndarray:
        return np.diff(self.boundaries)


@dataclass(eq=False)
class Shard:
    """One rank's contiguous piece of X.

    For a row layout ``local`` is ``X[lo:hi, :]``; for a column layout it is
    ``X[:, lo:hi]`` with column indices renumbered from zero.
    """
    rank: int
    local: CsrMatrix
    layout: Layout
    global_shape: tuple[int, int]

    @property
    def lo(self) -> int:
        return self.layout.range_of(self.rank)[0]

    @property
    def hi(self) -> int:
        return self.layout.range_of(self.rank)[1]

    @property
    def kind(self) -> LayoutKind:
        return self.layout.kind


def partition(X: CsrMatrix, P: int, kind) -> list[Shard]:
    """Split X into P contiguous, equal-as-possible blocks.

    Ranks beyond the split dimension get empty shards.
    """
    if P < 1:
        raise ValueError("rank count must be >= 1")
    kind = LayoutKind(kind)
    dim = X.n_rows if kind is LayoutKind.ROW else X.n_cols
    layout = Layout.even(kind, P, dim)
    S = X.to_scipy()
    shards = []
    for r in range(P):
        lo, hi = layout.range_of(r)
        piece = S[lo:hi, :] if kind is LayoutKind.ROW else S[:, lo:hi]
        shards.append(Shard(r, CsrMatrix.from_scipy(piece), layout, X.shape))
    return shards


def merge_shards(shards: list[Shard]) -> CsrMatrix:
    """Concatenate shards in rank order (inverse of :func:`partition`)."""
    shards = sorted(shards, key=lambda s: s.rank)
    parts = [s.local.to_scipy() for s in shards]
    if shards[0].kind is LayoutKind.ROW:
        m = sp.vstack(parts, format="csr")
    else:
        m = sp.hstack(parts, format="csr")
    return CsrMatrix.from_scipy(m)


def nnz_skew(shards: list[Shard]) -> float:
    """max/mean of per-rank stored entries (1.0 is perfect balance)."""
    counts = np.array([s.local.nnz for s in shards], dtype=float)
    mean = counts.mean()
    return float(counts.max() / mean) if mean > 0 else 1.0


def repartition_sampled(ctx, shard: Shard, sel: BlockSelector | np.ndarray) -> CsrMatrix:
    """All-to-all the sampled rows of a row-layout X into column layout.

    Runs inside an SPMD program. Each rank extracts the sampled rows it owns,
    cuts them at the column-layout boundaries and ships every piece to the
    rank owning those columns. Returns this rank's ``b x n_local`` block,
    rows ordered as in ``sel``, column indices local to the new range.
    ``sel`` may also be a plain index array (repeats allowed), as used when
    several iterations' blocks are stacked.
    """
    if shard.kind is not LayoutKind.ROW:
        raise ValueError("repartition_sampled expects a row-layout shard")
    d, n = shard.global_shape
    if isinstance(sel, BlockSelector):
        if sel.universe_size != d:
            raise ValueError("selector universe does not match the feature count")
        idx = sel.indices
    else:
        idx = np.asarray(sel, dtype=np.int64)
    P = ctx.P
    cols = Layout.even(LayoutKind.COLUMN, P, n)
    lo, hi = shard.lo, shard.hi
    mask = (idx >= lo) & (idx < hi)
    mine = np.flatnonzero(mask)          # positions within sel
    rows = extract_rows(shard.local, idx[mine] - lo).to_scipy()
    # b x n block holding only this rank's sampled rows, at their selector slots
    place = sp.csr_matrix((np.ones(mine.size), (mine, np.arange(mine.size))),
                          shape=(idx.size, mine.size))
    block = (place @ rows).tocsr()
    send = []
    for dest in range(P):
        c0, c1 = cols.range_of(dest)
        send.append(CsrMatrix.from_scipy(block[:, c0:c1]))
    recv = ctx.all_to_all(send)
    total = recv[0].to_scipy()
    for piece in recv[1:]:
        total = total + piece.to_scipy()   # supports are disjoint, so sums are exact
    return CsrMatrix.from_scipy(total)


def max_load(sel: BlockSelector, layout: Layout) -> int:
    """Largest number of sampled indices owned by a single rank."""
    if sel.universe_size != layout.dim:
        raise ValueError("selector universe does not match the layout dimension")
    counts = np.bincount(layout.owner(sel.indices), minlength=layout.P)
    return int(counts.max())


def transpose_shard(shard: Shard) -> Shard:
    """View a shard of X as the matching shard of X.T (row <-> column layout)."""
    kind = LayoutKind.COLUMN if shard.kind is LayoutKind.ROW else LayoutKind.ROW
    layout = Layout(kind, shard.layout.P, shard.layout.boundaries)
    d, n = shard.global_shape
    return Shard(shard.rank, shard.local.T, layout, (n, d))
