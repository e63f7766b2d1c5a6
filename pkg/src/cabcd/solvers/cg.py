"""Conjugate gradient on the ridge normal equations ((1/n) X X.T + lam I) w = (1/n) X y.

Used as the reference solver (to obtain w_opt) and as a baseline in the
convergence comparisons. The operator is applied as X (X.T p) so X X.T is
never formed.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from ..comm import run_spmd
from ..partition import LayoutKind, Shard, partition
from ..sparse import CsrMatrix, spmv, spmv_t
from .config import PrimalState, Snapshot, SolveResult, SolverConfig


class _NormalOperator:
    """Replicated-vector access to p -> (1/n) X X.T p + lam p for one rank."""

    def __init__(self, ctx, shard: Shard, lam: float):
        self.ctx, self.shard, self.lam = ctx, shard, lam
        self.d, self.n = shard.global_shape

    def xy(self, y: np.ndarray) -> np.ndarray:
        ctx, sh = self.ctx, self.shard
        if sh.kind is LayoutKind.COLUMN:
            out = ctx.allreduce_sum(spmv(sh.local, y[sh.lo:sh.hi], ctx))
        else:
            part = np.zeros(self.d)
            part[sh.lo:sh.hi] = spmv(sh.local, y, ctx)
            out = ctx.allreduce_sum(part)
        ctx.add_flops(self.d)
        return out / self.n

    def apply(self, p: np.ndarray) -> np.ndarray:
        ctx, sh = self.ctx, self.shard
        if sh.kind is LayoutKind.COLUMN:
            q = ctx.allreduce_sum(spmv(sh.local, spmv_t(sh.local, p, ctx), ctx))
        else:
            # row layout: X.T p needs a sum over ranks, X (.) stays local
            t = ctx.allreduce_sum(spmv_t(sh.local, p[sh.lo:sh.hi], ctx))
            q = np.zeros(self.d)
            q[sh.lo:sh.hi] = spmv(sh.local, t, ctx)
            q = ctx.allreduce_sum(q)
        ctx.add_flops(3 * self.d)
        return q / self.n + self.lam * p


def _cg_program(ctx, shard, y, cfg: SolverConfig, fixed_iters: Optional[int], cap: int, record):
    A = _NormalOperator(ctx, shard, cfg.lam)
    d = A.d
    with ctx.phase("setup"):
        rhs = A.xy(y)
        bnorm = float(np.linalg.norm(rhs))
    w = np.zeros(d)
    r = rhs.copy()
    p = r.copy()
    rr = float(r @ r)
    best_w, best_res = w.copy(), np.sqrt(rr)
    limit = fixed_iters if fixed_iters is not None else cap
    tol = cfg.tol * bnorm
    record(0, w, 1.0 if bnorm > 0 else 0.0)
    k = 0
    converged = bnorm == 0.0
    while k < limit and not (fixed_iters is None and converged):
        with ctx.phase("update"):
            q = A.apply(p)
            pq = float(p @ q)
            if pq <= 0.0:
                break
            a = rr / pq
            w = w + a * p
            r = r - a * q
            rr_new = float(r @ r)
            p = r + (rr_new / rr) * p
            rr = rr_new
            ctx.add_flops(10 * d)
        k += 1
        res = np.sqrt(rr)
        if res < best_res:
            best_w, best_res = w.copy(), res
        converged = res <= tol
        if fixed_iters is not None or (cfg.record_interval and k % cfg.record_interval == 0):
            record(k, w, res / bnorm)
    if fixed_iters is None:
        w = best_w
    return dict(w=w, k=k, converged=converged, res=best_res if fixed_iters is None else np.sqrt(rr))


def cg_solve(data, y, cfg: SolverConfig, *, P: Optional[int] = None, layout=None,
             backend: str = "lockstep", fixed_iters: Optional[int] = None,
             callback: Optional[Callable[[Snapshot], None]] = None,
             iteration_cap: Optional[int] = None) -> SolveResult:
    """Solve the ridge normal equations by CG.

    Stops when ||r|| <= tol * ||(1/n) X y|| or after ``iteration_cap``
    (default 10 d) iterations; the
    iterate with the smallest residual is returned, and ``flagged`` is set
    if the tolerance was not reached. With ``fixed_iters`` exactly that many
    iterations run and every iterate is recorded. Snapshot residuals are
    relative, ||r|| / ||(1/n) X y||.
    """
    if isinstance(data, CsrMatrix):
        shards = partition(data, 1 if P is None else P,
                           LayoutKind.COLUMN if layout is None else LayoutKind(layout))
    else:
        shards = sorted(data, key=lambda s: s.rank)
    d, n = shards[0].global_shape
    cfg.validate(d, n)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (n,):
        raise ValueError(f"label vector has shape {y.shape}, expected ({n},)")
    cap = 10 * d if iteration_cap is None else iteration_cap
    history = []

    def program(ctx):
        def record(k, w, rel_res):
            if ctx.rank != 0:
                return
            snap = Snapshot(k, PrimalState(w=w.copy(), z=np.empty(0), iteration=k),
                            ctx.group.critical_path_now(), residual_norm=float(rel_res))
            if cfg.keep_history:
                history.append(snap)
            if callback is not None:
                callback(snap)
        return _cg_program(ctx, shards[ctx.rank], y, cfg, fixed_iters, cap, record)

    results, group = run_spmd(len(shards), program, backend=backend)
    r0 = results[0]
    converged = bool(r0["converged"])
    return SolveResult(algo="cg", state=PrimalState(w=r0["w"], z=np.empty(0), iteration=r0["k"]),
                       iterations=r0["k"], converged=converged, counters=group.critical_path.copy(),
                       group=group, history=history, residuals=[(r0["k"], float(r0["res"]))],
                       flagged=fixed_iters is None and not converged)
