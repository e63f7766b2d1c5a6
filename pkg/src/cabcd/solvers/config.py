from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..comm import CostCounters

ALGORITHMS = ("cg", "bcd", "bdcd", "cabcd", "cabdcd")
PRIMAL_ALGOS = ("bcd", "cabcd")
DUAL_ALGOS = ("bdcd", "cabdcd")


@dataclass
class SolverConfig:
    """Run parameters shared by all solvers.

    ``block`` is b for the primal methods and b' for the dual ones.
    ``check_interval`` and ``record_interval`` are measured in iterations h
    (the unit of ``max_iters``); CA variants act at the first outer-iteration
    boundary that reaches them. ``check_interval=None`` means one epoch
    (ceil(d/b) primal, ceil(n/b') dual); 0 disables residual checks.
    """

    algo: str
    block: int = 1
    s: int = 1
    lam: float = 1.0
    max_iters: int = 100
    tol: float = 0.0
    seed: int = 0
    check_interval: Optional[int] = None
    record_interval: Optional[int] = None
    keep_history: bool = False
    track_cond: bool = False
    dual_tol_factor: float = 0.1

    def validate(self, d: int, n: int) -> None:
        if self.algo not in ALGORITHMS:
            raise ValueError(f"algo: unknown algorithm {self.algo!r}")
        if not self.lam > 0 and self.algo != "cg":
            raise ValueError("lam: regularisation must be > 0")
        if self.algo == "cg" and self.lam < 0:
            raise ValueError("lam: regularisation must be >= 0")
        if self.s < 1:
            raise ValueError("s: unroll factor must be >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters: must be >= 0")
        if self.algo in PRIMAL_ALGOS and not 1 <= self.block <= d:
            raise ValueError(f"block: need 1 <= b <= d = {d}")
        if self.algo in DUAL_ALGOS and not 1 <= self.block <= n:
            raise ValueError(f"block: need 1 <= b' <= n = {n}")
        for name in ("check_interval", "record_interval"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name}: must be >= 0")

    def epoch_length(self, d: int, n: int) -> int:
        universe = d if self.algo in PRIMAL_ALGOS else n
        return math.ceil(universe / self.block)

    def effective_check_interval(self, d: int, n: int) -> int:
        if self.check_interval is None:
            return self.epoch_length(d, n)
        return self.check_interval


@dataclass
class PrimalState:
    w: np.ndarray
    z: np.ndarray
    iteration: int = 0


@dataclass
class DualState:
    alpha: np.ndarray
    w: np.ndarray
    iteration: int = 0


@dataclass
class Snapshot:
    """Solver state at a record point, as seen by the driver."""
    iteration: int
    state: object
    counters: CostCounters
    sampled_nnz: int = 0
    gram_cond: Optional[float] = None
    residual_norm: Optional[float] = None


@dataclass
class SolveResult:
    algo: str
    state: object
    iterations: int
    converged: bool
    counters: CostCounters
    group: object = None
    history: list = field(default_factory=list)
    gram_conds: list = field(default_factory=list)
    residuals: list = field(default_factory=list)   # (iteration, norm)
    sampled_nnz: int = 0
    flagged: bool = False

    @property
    def w(self) -> np.ndarray:
        return self.state.w
