"""Objectives, error measures and Gram-conditioning statistics.

All functions here run on the driver and are never charged to the cost
counters.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Optional, Sequence, Union

import numpy as np

from .partition import LayoutKind, Shard
from .sparse import CsrMatrix

Data = Union[CsrMatrix, Sequence[Shard]]


def _xt_dot(data: Data, w: np.ndarray) -> np.ndarray:
    """X.T @ w, summing per-shard partials for a row layout."""
    if isinstance(data, CsrMatrix):
        if w.shape != (data.n_rows,):
            raise ValueError(f"w has shape {w.shape}, expected ({data.n_rows},)")
        return data.to_scipy().T @ w
    shards = sorted(data, key=lambda s: s.rank)
    d, n = shards[0].global_shape
    if w.shape != (d,):
        raise ValueError(f"w has shape {w.shape}, expected ({d},)")
    if shards[0].kind is LayoutKind.COLUMN:
        return np.concatenate([s.local.to_scipy().T @ w for s in shards])
    out = np.zeros(n)
    for s in shards:
        out += s.local.to_scipy().T @ w[s.lo:s.hi]
    return out


def _x_dot(data: Data, a: np.ndarray) -> np.ndarray:
    if isinstance(data, CsrMatrix):
        if a.shape != (data.n_cols,):
            raise ValueError(f"alpha has shape {a.shape}, expected ({data.n_cols},)")
        return data.to_scipy() @ a
    shards = sorted(data, key=lambda s: s.rank)
    d, n = shards[0].global_shape
    if a.shape != (n,):
        raise ValueError(f"alpha has shape {a.shape}, expected ({n},)")
    if shards[0].kind is LayoutKind.ROW:
        return np.concatenate([s.local.to_scipy() @ a for s in shards])
    out = np.zeros(d)
    for s in shards:
        out += s.local.to_scipy() @ a[s.lo:s.hi]
    return out


def primal_objective(data: Data, w, y, lam: float) -> float:
    """f(w) = (1/2n) ||X.T w - y||^2 + (lam/2) ||w||^2."""
    w = np.asarray(w, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    r = _xt_dot(data, w)
    if r.shape != y.shape:
        raise ValueError(f"y has shape {y.shape}, expected {r.shape}")
    r -= y
    return float(r @ r / (2 * y.size) + 0.5 * lam * (w @ w))


def dual_objective(data: Data, alpha, y, lam: float) -> float:
    """(lam/2) ||X alpha / (lam n)||^2 + (1/2n) ||alpha + y||^2."""
    alpha = np.asarray(alpha, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if alpha.shape != y.shape:
        raise ValueError(f"alpha has shape {alpha.shape}, y has {y.shape}")
    n = y.size
    v = _x_dot(data, alpha) / (lam * n)
    r = alpha + y
    return float(0.5 * lam * (v @ v) + r @ r / (2 * n))


def relative_objective_error(f_alg: float, f_opt: float) -> float:
    """|f_alg - f_opt| / f_opt (absolute value so overshoot shows as a magnitude)."""
    if not f_opt > 0:
        raise ValueError(f"optimal objective must be positive, got {f_opt}")
    return abs(f_alg - f_opt) / f_opt


def relative_solution_error(w, w_opt) -> float:
    w_opt = np.asarray(w_opt, dtype=np.float64)
    nrm = np.linalg.norm(w_opt)
    if nrm == 0:
        raise ValueError("reference solution is zero")
    return float(np.linalg.norm(np.asarray(w, dtype=np.float64) - w_opt) / nrm)


@dataclass(frozen=True)
class CondStats:
    min: float
    q1: float
    median: float
    q3: float
    max: float


def nearest_rank(sorted_vals: Sequence[float], q: float) -> float:
    """Nearest-rank quantile: the ceil(q*N)-th smallest value (1-based), q in (0, 1]."""
    N = len(sorted_vals)
    k = max(1, math.ceil(q * N))
    return float(sorted_vals[k - 1])


def cond_stats(trace) -> CondStats:
    vals = sorted(float(v) for v in trace)
    if not vals:
        raise ValueError("empty condition-number trace")
    return CondStats(vals[0], nearest_rank(vals, 0.25), nearest_rank(vals, 0.5),
                     nearest_rank(vals, 0.75), vals[-1])


@dataclass
class MetricsRow:
    iter: int
    epoch: float
    objective: float
    rel_obj_err: Optional[float]
    rel_sol_err: Optional[float]
    residual: Optional[float]
    flops: int
    words: int
    messages: int
    gram_cond: Optional[float]
    wall_s: float

    @classmethod
    def header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_csv_row(self) -> list[str]:
        out = []
        for k, v in asdict(self).items():
            if v is None:
                out.append("")
            elif isinstance(v, float) and k != "epoch" and k != "wall_s":
                out.append(repr(v))
            elif k == "wall_s":
                out.append(f"{v:.6f}")
            else:
                out.append(str(v))
        return out
