"""Primal (BCD) and dual (BDCD) block coordinate descent, classical and s-step.

Both methods share one shape once the operand is fixed. Let ``A`` be X for
the primal and X.T for the dual, so each iteration samples b *rows* of A.
The state is a replicated "row vector" indexed by rows of A (w primal,
alpha dual) and a "column vector" partitioned across ranks by columns of A
(z = X.T w primal, w = -(1/(lam n)) X alpha dual). One iteration is

    Y    = rows I of A                       (b x n_local)
    G    = gram_scale * Y Y.T + shift * I    (one allreduce)
    u    = Y @ col                           (one allreduce)
    rhs  = row_coef * row[I] + res_coef * u + const[I]
    step = step_coef * G^{-1} rhs
    row[I] += step ;  col += col_coef * Y.T @ step

with the coefficients in :func:`primal_problem` / :func:`dual_problem`.
The s-step variant samples s blocks up front, forms the (sb x sb) Gram
matrix with one allreduce, and replaces the fresh ``u`` of inner step j by
the value implied by the deferred updates of steps t < j:

    rhs_j = row_coef * (row[I_j] + sum_t I_j.T I_t step_t)
            + res_coef * u_j + cross_coef * sum_t G[j, t] step_t + const[I_j]

Charged flops per classical iteration with m = b, nnz = nnz(Y local):
Gram 2*m*nnz, residual 2*nnz, shift m, rhs 4b, solve b^3/3 + 2b^2, step
scaling b, row update b, column update 2*nnz + b. The s-step variant
charges the Gram on the stacked sb rows and 2b^2 + 2b per cross term.
Setup charges one spmv plus d scalings for the primal right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..comm import run_spmd
from ..partition import Layout, LayoutKind, Shard, partition, repartition_sampled, transpose_shard
from ..sparse import CsrMatrix, condition_number, extract_rows, gram_rows, spmv, spmv_t
from .config import DualState, PrimalState, Snapshot, SolveResult, SolverConfig
from .linalg import solve_spd
from .sampling import sample_block


@dataclass(frozen=True)
class Problem:
    gram_scale: float
    shift: float
    row_coef: float
    res_coef: float
    step_coef: float
    col_coef: float
    dual: bool

    @property
    def cross_coef(self) -> float:
        return self.res_coef * self.col_coef / self.gram_scale


def primal_problem(lam: float, n: int) -> Problem:
    return Problem(gram_scale=1.0 / n, shift=lam, row_coef=-lam, res_coef=-1.0 / n,
                   step_coef=1.0, col_coef=1.0, dual=False)


def dual_problem(lam: float, n: int) -> Problem:
    return Problem(gram_scale=1.0 / (lam * n * n), shift=1.0 / n, row_coef=1.0,
                   res_coef=-1.0, step_coef=-1.0 / n, col_coef=-1.0 / (lam * n), dual=True)


class _Operand:
    """One rank's access to A, with columns distributed in even blocks."""

    def __init__(self, ctx, shard: Shard):
        self.ctx = ctx
        self.shard = shard
        self.natural = shard.kind is LayoutKind.COLUMN
        self.m, self.N = shard.global_shape
        self.cols = Layout.even(LayoutKind.COLUMN, ctx.P, self.N)
        self.c0, self.c1 = self.cols.range_of(ctx.rank)

    def block(self, idx: np.ndarray) -> CsrMatrix:
        if self.natural:
            return extract_rows(self.shard.local, idx)
        with self.ctx.phase("repartition"):
            return repartition_sampled(self.ctx, self.shard, idx)

    def matvec(self, col_local: np.ndarray) -> np.ndarray:
        """A @ col, replicated on every rank."""
        ctx = self.ctx
        if self.natural:
            return ctx.allreduce_sum(spmv(self.shard.local, col_local, ctx))
        full = np.zeros(self.N)
        full[self.c0:self.c1] = col_local
        full = ctx.allreduce_sum(full)
        part = np.zeros(self.m)
        part[self.shard.lo:self.shard.hi] = spmv(self.shard.local, full, ctx)
        return ctx.allreduce_sum(part)

    def rmatvec(self, row: np.ndarray) -> np.ndarray:
        """This rank's slice of A.T @ row."""
        ctx = self.ctx
        if self.natural:
            return spmv_t(self.shard.local, row, ctx)
        part = spmv_t(self.shard.local, row[self.shard.lo:self.shard.hi], ctx)
        return ctx.allreduce_sum(part)[self.c0:self.c1]


def _crossed(prev: int, cur: int, interval: int) -> bool:
    return interval > 0 and cur // interval > prev // interval


def _rank_program(ctx, shard: Shard, y: np.ndarray, prob: Problem, cfg: SolverConfig,
                  unrolled: bool, row0: Optional[np.ndarray], check_interval: int,
                  record: Callable):
    op = _Operand(ctx, shard)
    m = op.m
    b = cfg.block
    s = cfg.s if unrolled else 1
    H = cfg.max_iters
    tol = cfg.tol * (cfg.dual_tol_factor if prob.dual else 1.0)
    checking = check_interval > 0 and cfg.tol > 0
    rec_every = cfg.record_interval or 0

    with ctx.phase("setup"):
        if prob.dual:
            const = np.asarray(y, dtype=np.float64)
        else:
            const = op.matvec(y[op.c0:op.c1]) * (1.0 / y.size)
            ctx.add_flops(m)
        row = np.zeros(m) if row0 is None else np.array(row0, dtype=np.float64)
        if np.any(row):
            col = prob.col_coef * op.rmatvec(row)
            ctx.add_flops(op.c1 - op.c0)
        else:
            col = np.zeros(op.c1 - op.c0)

    sampled_nnz = 0
    residuals = []
    conds = []
    last_cond = None
    last_res = None

    def residual_norm():
        with ctx.phase("check"):
            r = prob.row_coef * row + prob.res_coef * op.matvec(col) + const
            ctx.add_flops(4 * m)
        return float(np.linalg.norm(r))

    def snapshot(h):
        pieces = ctx.gather_untimed((col, sampled_nnz))
        if ctx.rank == 0:
            colvec = np.concatenate([p[0] for p in pieces])
            if prob.dual:
                state = DualState(alpha=row.copy(), w=colvec, iteration=h)
            else:
                state = PrimalState(w=row.copy(), z=colvec, iteration=h)
            record(Snapshot(h, state, ctx.last_counters, sum(p[1] for p in pieces),
                            last_cond, last_res))

    snapshot(0)
    h = 0
    converged = False
    while h < H and not converged:
        s_eff = min(s, H - h)
        sels = [sample_block(cfg.seed, h + j + 1, m, b).indices for j in range(s_eff)]
        idx_all = np.concatenate(sels) if s_eff > 1 else sels[0]
        Y = op.block(idx_all)
        with ctx.phase("gram"):
            G = ctx.allreduce_sum(gram_rows(Y, prob.gram_scale, ctx))
        with ctx.phase("residual"):
            u = ctx.allreduce_sum(spmv(Y, col, ctx))
        with ctx.phase("update"):
            G[np.diag_indices_from(G)] += prob.shift
            ctx.add_flops(G.shape[0])
            if not unrolled:
                idx = sels[0]
                rhs = prob.row_coef * row[idx] + prob.res_coef * u + const[idx]
                ctx.add_flops(4 * b)
                step = prob.step_coef * solve_spd(G, rhs, ctx)
                ctx.add_flops(b)
                row[idx] += step
                ctx.add_flops(b)
                col += spmv_t(Y, prob.col_coef * step, ctx)
                ctx.add_flops(b)
            else:
                steps = []
                for j in range(s_eff):
                    blk = slice(j * b, (j + 1) * b)
                    idx = sels[j]
                    overlap = np.zeros(b)
                    cross = np.zeros(b)
                    for t in range(j):
                        _, pj, pt = np.intersect1d(idx, sels[t], assume_unique=True,
                                                   return_indices=True)
                        overlap[pj] += steps[t][pt]
                        cross += G[blk, t * b:(t + 1) * b] @ steps[t]
                        ctx.add_flops(2 * b * b + 2 * b)
                    rhs = (prob.row_coef * (row[idx] + overlap) + prob.res_coef * u[blk]
                           + prob.cross_coef * cross + const[idx])
                    ctx.add_flops(4 * b)
                    step = prob.step_coef * solve_spd(G[blk, blk], rhs, ctx)
                    ctx.add_flops(b)
                    steps.append(step)
                all_steps = np.concatenate(steps) if s_eff > 1 else steps[0]
                np.add.at(row, idx_all, all_steps)   # sequential for repeated indices
                ctx.add_flops(all_steps.size)
                col += spmv_t(Y, prob.col_coef * all_steps, ctx)
                ctx.add_flops(all_steps.size)
        sampled_nnz += Y.nnz
        if cfg.track_cond and ctx.rank == 0:
            last_cond = condition_number(G)
            conds.append((h + s_eff, last_cond))
        prev, h = h, h + s_eff
        if checking and _crossed(prev, h, check_interval):
            last_res = residual_norm()
            residuals.append((h, last_res))
            converged = last_res <= tol
        if _crossed(prev, h, rec_every) or h == H or converged:
            snapshot(h)
    return dict(row=row, col=col, h=h, converged=converged, residuals=residuals,
                conds=conds, sampled_nnz=sampled_nnz)


def _prepare_shards(data, P: Optional[int], natural: LayoutKind, layout) -> list[Shard]:
    if isinstance(data, CsrMatrix):
        kind = natural if layout is None else LayoutKind(layout)
        return partition(data, 1 if P is None else P, kind)
    shards = sorted(data, key=lambda s: s.rank)
    if P is not None and P != len(shards):
        raise ValueError(f"P={P} does not match the {len(shards)} shards given")
    if [s.rank for s in shards] != list(range(len(shards))):
        raise ValueError("shard ranks must be 0..P-1")
    return shards


def _solve(data, y, cfg: SolverConfig, *, dual: bool, unrolled: bool, P: Optional[int] = None,
           layout=None, backend: str = "lockstep", callback=None, x0=None,
           all_to_all_mode: str = "small") -> SolveResult:
    shards = _prepare_shards(data, P, LayoutKind.ROW if dual else LayoutKind.COLUMN, layout)
    P = len(shards)
    d, n = shards[0].global_shape
    cfg.validate(d, n)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (n,):
        raise ValueError(f"label vector has shape {y.shape}, expected ({n},)")
    prob = dual_problem(cfg.lam, n) if dual else primal_problem(cfg.lam, n)
    operand = [transpose_shard(s) for s in shards] if dual else shards
    check_interval = cfg.effective_check_interval(d, n)
    history: list = []

    def record(snap: Snapshot):
        if cfg.keep_history:
            history.append(snap)
        if callback is not None:
            callback(snap)

    def program(ctx):
        return _rank_program(ctx, operand[ctx.rank], y, prob, cfg, unrolled, x0,
                             check_interval, record)

    results, group = run_spmd(P, program, backend=backend, all_to_all_mode=all_to_all_mode)
    r0 = results[0]
    colvec = np.concatenate([r["col"] for r in results])
    if dual:
        state = DualState(alpha=r0["row"], w=colvec, iteration=r0["h"])
    else:
        state = PrimalState(w=r0["row"], z=colvec, iteration=r0["h"])
    algo = ("cabdcd" if unrolled else "bdcd") if dual else ("cabcd" if unrolled else "bcd")
    return SolveResult(algo=algo, state=state, iterations=r0["h"], converged=r0["converged"],
                       counters=group.critical_path.copy(), group=group, history=history,
                       gram_conds=[c for _, c in r0["conds"]], residuals=r0["residuals"],
                       sampled_nnz=sum(r["sampled_nnz"] for r in results))


def bcd_solve(data, y, cfg: SolverConfig, **kw) -> SolveResult:
    """Primal block coordinate descent, one Gram allreduce per iteration.

    ``data`` is a CsrMatrix (partitioned over ``P`` ranks, column layout
    unless ``layout`` says otherwise) or a list of shards. Row-layout shards
    are re-partitioned each iteration with an all-to-all.
    """
    return _solve(data, y, cfg, dual=False, unrolled=False, **kw)


def cabcd_solve(data, y, cfg: SolverConfig, **kw) -> SolveResult:
    """Communication-avoiding BCD: one Gram allreduce per ``cfg.s`` iterations."""
    return _solve(data, y, cfg, dual=False, unrolled=True, **kw)


def bdcd_solve(data, y, cfg: SolverConfig, **kw) -> SolveResult:
    """Block dual coordinate descent; natural layout is 1D-block row."""
    return _solve(data, y, cfg, dual=True, unrolled=False, **kw)


def cabdcd_solve(data, y, cfg: SolverConfig, **kw) -> SolveResult:
    """Communication-avoiding BDCD."""
    return _solve(data, y, cfg, dual=True, unrolled=True, **kw)
