from .bcd import bcd_solve, bdcd_solve, cabcd_solve, cabdcd_solve, dual_problem, primal_problem
from .cg import cg_solve
from .config import (ALGORITHMS, DUAL_ALGOS, PRIMAL_ALGOS, DualState, PrimalState, Snapshot,
                     SolveResult, SolverConfig)
from .linalg import FactorizationError, solve_spd
from .sampling import sample_block
from .stopping import check_stopping, dual_residual, primal_residual

SOLVERS = {
    "cg": cg_solve,
    "bcd": bcd_solve,
    "cabcd": cabcd_solve,
    "bdcd": bdcd_solve,
    "cabdcd": cabdcd_solve,
}


def solve(data, y, cfg: SolverConfig, **kw) -> SolveResult:
    """Dispatch on ``cfg.algo``."""
    if cfg.algo not in SOLVERS:
        raise ValueError(f"algo: unknown algorithm {cfg.algo!r}")
    return SOLVERS[cfg.algo](data, y, cfg, **kw)
