"""Command-line experiment driver: ``solve``, ``compare`` and ``costs``."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .comm import BACKENDS, MachineParams, load_machine_params, predicted_time
from .costs import predict
from .datasets import DatasetUnavailable, dataset_name, lambda_from_multiplier, load_dataset
from .metrics import (MetricsRow, cond_stats, primal_objective, relative_objective_error,
                      relative_solution_error)
from .partition import LayoutKind
from .solvers import ALGORITHMS, PRIMAL_ALGOS, SolverConfig, cg_solve, solve
from .sparse import CsrMatrix

log = logging.getLogger("cabcd")


class SpecError(ValueError):
    """Invalid run specification; the message names the offending field."""


@dataclass
class RunSpec:
    data: str
    algo: str
    block: int = 1
    s: int = 1
    lam: Optional[float] = None
    lambda_mult: Optional[float] = None
    P: int = 1
    layout: str = "auto"
    max_iters: Optional[int] = None
    passes: Optional[float] = None
    tol: float = 0.0
    seed: int = 0
    check_interval: Optional[int] = None
    record_interval: Optional[int] = None
    backend: str = "lockstep"
    all_to_all: str = "small"
    machine: Optional[str] = None
    track_cond: bool = False

    def resolve_lambda(self) -> float:
        if self.lam is not None and self.lambda_mult is not None:
            raise SpecError("lambda: give either --lam or --lambda-mult, not both")
        if self.lam is not None:
            return float(self.lam)
        if self.lambda_mult is not None:
            name = dataset_name(self.data)
            if name is None:
                raise SpecError(f"lambda_mult: no shipped sigma_min for {self.data!r}; pass --lam")
            try:
                return lambda_from_multiplier(name, self.lambda_mult)
            except KeyError as e:
                raise SpecError(f"lambda_mult: {e.args[0]}") from None
        raise SpecError("lambda: one of --lam or --lambda-mult is required")

    def iterations(self, d: int, n: int) -> int:
        """H from --max-iters, or from --passes (H = passes * universe / block)."""
        if self.max_iters is not None and self.passes is not None:
            raise SpecError("max_iters: give either --max-iters or --passes, not both")
        if self.max_iters is not None:
            return int(self.max_iters)
        passes = 1.0 if self.passes is None else self.passes
        if self.algo == "cg":
            return int(round(passes))
        universe = d if self.algo in PRIMAL_ALGOS else n
        return int(round(passes * universe / self.block))

    def resolved_layout(self, d: int, n: int) -> LayoutKind:
        if self.layout == "auto":
            return LayoutKind.COLUMN if n > d else LayoutKind.ROW
        try:
            return LayoutKind(self.layout)
        except ValueError:
            raise SpecError(f"layout: expected row, col or auto, got {self.layout!r}") from None

    def config(self, d: int, n: int) -> SolverConfig:
        if self.algo not in ALGORITHMS:
            raise SpecError(f"algo: expected one of {ALGORITHMS}, got {self.algo!r}")
        if self.P < 1:
            raise SpecError("P: rank count must be >= 1")
        if self.backend not in BACKENDS:
            raise SpecError(f"backend: expected one of {BACKENDS}")
        cfg = SolverConfig(algo=self.algo, block=self.block, s=self.s, lam=self.resolve_lambda(),
                           max_iters=self.iterations(d, n), tol=self.tol, seed=self.seed,
                           check_interval=self.check_interval,
                           record_interval=self.record_interval, track_cond=self.track_cond)
        try:
            cfg.validate(d, n)
        except ValueError as e:
            raise SpecError(str(e)) from None
        return cfg


def reference_solution(X: CsrMatrix, y: np.ndarray, lam: float, P: int = 1) -> np.ndarray:
    """w_opt from CG at tolerance 1e-15."""
    res = cg_solve(X, y, SolverConfig("cg", lam=lam, tol=1e-15), P=P)
    if res.flagged:
        log.warning("reference CG stopped at the iteration cap; using its best iterate")
    return res.w


def passes_per_iteration(algo: str, block: int, d: int, n: int) -> float:
    if algo == "cg":
        return 1.0
    return block / (d if algo in PRIMAL_ALGOS else n)


def run(spec: RunSpec, X: CsrMatrix, y: np.ndarray, w_opt: Optional[np.ndarray] = None,
        record_every: Optional[int] = None):
    """Run one spec; returns (MetricsRow list, SolveResult, SolverConfig)."""
    d, n = X.shape
    cfg = spec.config(d, n)
    if cfg.record_interval is None:
        # default: every CG iteration, once per pass for the coordinate methods
        every = record_every or (1 if cfg.algo == "cg" else cfg.epoch_length(d, n))
        cfg = replace(cfg, record_interval=every)
    f_opt = primal_objective(X, w_opt, y, cfg.lam) if w_opt is not None else None
    rows: list[MetricsRow] = []
    t0 = time.perf_counter()
    nnz = max(X.nnz, 1)

    def on_snapshot(snap):
        w = snap.state.w
        obj = primal_objective(X, w, y, cfg.lam)
        if cfg.algo == "cg":
            epoch = float(snap.iteration)
        else:
            epoch = snap.sampled_nnz / nnz
        rows.append(MetricsRow(
            iter=snap.iteration, epoch=epoch, objective=obj,
            rel_obj_err=None if f_opt is None else relative_objective_error(obj, f_opt),
            rel_sol_err=None if w_opt is None else relative_solution_error(w, w_opt),
            residual=snap.residual_norm, flops=snap.counters.flops, words=snap.counters.words,
            messages=snap.counters.messages, gram_cond=snap.gram_cond,
            wall_s=time.perf_counter() - t0))

    kw = dict(P=spec.P, layout=spec.resolved_layout(d, n), backend=spec.backend, callback=on_snapshot)
    if cfg.algo == "cg":
        # tol > 0: run to tolerance; otherwise exactly max_iters iterations
        res = cg_solve(X, y, cfg, fixed_iters=cfg.max_iters if cfg.tol == 0 else None, **kw)
    else:
        res = solve(X, y, cfg, all_to_all_mode=spec.all_to_all, **kw)
    return rows, res, cfg


def write_csv(path, rows: list[MetricsRow]) -> None:
    out = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        wr = csv.writer(out, lineterminator="\n")
        wr.writerow(MetricsRow.header())
        for r in rows:
            wr.writerow(r.as_csv_row())
    finally:
        if out is not sys.stdout:
            out.close()


def _machine(spec_path) -> MachineParams:
    if spec_path is None:
        return MachineParams(gamma=0.0, alpha_latency=0.0, beta=0.0)
    return load_machine_params(spec_path)


def _summary(spec: RunSpec, rows, res, machine: MachineParams) -> str:
    last = rows[-1] if rows else None
    err = "n/a" if last is None or last.rel_obj_err is None else f"{last.rel_obj_err:.4e}"
    c = res.counters
    parts = [f"algo={spec.algo}", f"iters={res.iterations}", f"converged={res.converged}",
             f"rel_obj_err={err}", f"F={c.flops}", f"W={c.words}", f"L={c.messages}",
             f"predicted_time={predicted_time(c, machine):.6g}s"]
    if res.gram_conds:
        st = cond_stats(res.gram_conds)
        parts.append(f"cond_median={st.median:.4g}")
    if res.flagged:
        parts.append("flagged=not-converged")
    return " ".join(parts)


# ------------------------------------------------------------------ argument parsing

def _add_run_args(p: argparse.ArgumentParser, with_algo: bool = True) -> None:
    p.add_argument("--data", required=True, help="LIBSVM file path or known dataset name")
    if with_algo:
        p.add_argument("--algo", required=True, choices=ALGORITHMS)
        p.add_argument("--block", "-b", type=int, default=1)
        p.add_argument("--s", type=int, default=1, help="unroll factor for the CA variants")
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--lambda-mult", type=float, default=None,
                   help="lambda = mult * shipped sigma_min of the named dataset")
    p.add_argument("--P", type=int, default=1, help="number of logical ranks")
    p.add_argument("--layout", choices=("row", "col", "auto"), default="auto")
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--passes", type=float, default=None, help="iterations as passes over X")
    p.add_argument("--tol", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--check-interval", type=int, default=None)
    p.add_argument("--record-interval", type=int, default=None)
    p.add_argument("--backend", choices=BACKENDS, default="lockstep")
    p.add_argument("--all-to-all", choices=("small", "large"), default="small")
    p.add_argument("--machine", default=None, help="machine-params file (gamma/alpha/beta)")
    p.add_argument("--track-cond", action="store_true")
    p.add_argument("--no-reference", action="store_true", help="skip the CG reference solve")
    p.add_argument("--out", "-o", default="-")


def _spec_from_args(a, **over) -> RunSpec:
    fields = dict(data=a.data, algo=getattr(a, "algo", "bcd"), block=getattr(a, "block", 1),
                  s=getattr(a, "s", 1), lam=a.lam, lambda_mult=a.lambda_mult, P=a.P,
                  layout=a.layout, max_iters=a.max_iters, passes=a.passes, tol=a.tol,
                  seed=a.seed, check_interval=a.check_interval,
                  record_interval=a.record_interval, backend=a.backend,
                  all_to_all=a.all_to_all, machine=a.machine, track_cond=a.track_cond)
    fields.update(over)
    return RunSpec(**fields)


def parse_run_token(token: str) -> dict:
    """``bcd`` or ``cabcd:block=4,s=8`` -> RunSpec overrides."""
    algo, _, rest = token.partition(":")
    out: dict = {"algo": algo}
    conv = {"block": int, "b": int, "s": int, "seed": int, "data": str, "layout": str,
            "max_iters": int, "passes": float}
    for kv in filter(None, rest.split(",")):
        k, sep, v = kv.partition("=")
        if not sep or k not in conv:
            raise SpecError(f"run: cannot parse {kv!r} in {token!r}")
        out["block" if k == "b" else k] = conv[k](v)
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cabcd", description="(CA-)BCD / (CA-)BDCD ridge regression driver")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("solve", help="run one solver and write a per-iteration CSV")
    _add_run_args(p)
    p = sub.add_parser("compare", help="run several solvers and align them by data passes")
    _add_run_args(p, with_algo=False)
    p.add_argument("--run", action="append", required=True,
                   help="algo[:key=val,...], e.g. cg, bcd:b=1, cabcd:b=4,s=8 (repeatable)")
    p = sub.add_parser("costs", help="predicted vs measured critical-path costs")
    _add_run_args(p)
    return ap


def _load(spec: RunSpec):
    try:
        return load_dataset(spec.data)
    except DatasetUnavailable as e:
        raise SystemExit(f"error: {e}")


def cmd_solve(a) -> int:
    spec = _spec_from_args(a)
    X, y = _load(spec)
    lam = spec.resolve_lambda()
    w_opt = None if a.no_reference else reference_solution(X, y, lam)
    rows, res, _ = run(spec, X, y, w_opt)
    write_csv(a.out, rows)
    print(_summary(spec, rows, res, _machine(spec.machine)), file=sys.stderr)
    return 0


def cmd_compare(a) -> int:
    base = _spec_from_args(a)
    specs = []
    for tok in a.run:
        over = parse_run_token(tok)
        if over.get("data", base.data) != base.data:
            raise SpecError(f"run: dataset {over['data']!r} differs from --data {base.data!r}")
        specs.append(replace(base, **over))
    X, y = _load(base)
    d, n = X.shape
    lam = base.resolve_lambda()
    w_opt = None if a.no_reference else reference_solution(X, y, lam)
    out = sys.stdout if a.out in (None, "-") else open(a.out, "w", newline="")
    try:
        wr = csv.writer(out, lineterminator="\n")
        wr.writerow(["algo", "block", "s", "passes"] + MetricsRow.header())
        for spec in specs:
            rows, res, cfg = run(spec, X, y, w_opt)
            ppi = passes_per_iteration(spec.algo, spec.block, d, n)
            for r in rows:
                wr.writerow([spec.algo, spec.block, spec.s, repr(r.iter * ppi)] + r.as_csv_row())
            print(_summary(spec, rows, res, _machine(spec.machine)), file=sys.stderr)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cost_table(spec: RunSpec, X: CsrMatrix, y: np.ndarray) -> list[tuple[str, float, float]]:
    """(quantity, predicted, measured) for F, W, L from a dry run of ``spec``."""
    if spec.algo == "cg":
        raise SpecError("algo: the cost model covers bcd, cabcd, bdcd and cabdcd")
    d, n = X.shape
    dry = replace(spec, tol=0.0, check_interval=0, track_cond=False)
    _, res, cfg = run(dry, X, y, None, record_every=10 ** 12)
    layout = spec.resolved_layout(d, n)
    natural = (layout is LayoutKind.COLUMN) == (spec.algo in PRIMAL_ALGOS)
    pred = predict(spec.algo, H=cfg.max_iters, b=cfg.block, s=cfg.s, d=d, n=n,
                   f=X.density, P=spec.P, natural_layout=natural,
                   all_to_all_mode=spec.all_to_all)
    c = res.counters
    return [("F", pred.flops, c.flops), ("W", pred.words, c.words), ("L", pred.messages, c.messages)]


def cmd_costs(a) -> int:
    spec = _spec_from_args(a)
    X, y = _load(spec)
    table = cost_table(spec, X, y)
    out = sys.stdout if a.out in (None, "-") else open(a.out, "w", newline="")
    try:
        wr = csv.writer(out, lineterminator="\n")
        wr.writerow(["quantity", "predicted", "measured", "measured_over_predicted"])
        for q, p, m in table:
            ratio = m / p if p else (1.0 if m == 0 else math.inf)
            wr.writerow([q, f"{p:.6g}", m, f"{ratio:.4f}"])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def main(argv=None) -> int:
    ap = build_parser()
    a = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return {"solve": cmd_solve, "compare": cmd_compare, "costs": cmd_costs}[a.cmd](a)
    except SpecError as e:
        ap.error(str(e))   # exits with status 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
