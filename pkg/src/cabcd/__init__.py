"""Communication-avoiding primal and dual block coordinate descent for ridge regression."""

from .comm import CostCounters, MachineParams, predicted_time, run_spmd
from .metrics import (cond_stats, dual_objective, primal_objective, relative_objective_error,
                      relative_solution_error)
from .partition import Layout, LayoutKind, partition
from .solvers import (SolverConfig, bcd_solve, bdcd_solve, cabcd_solve, cabdcd_solve, cg_solve,
                      solve)
from .sparse import BlockSelector, CsrMatrix, parse_libsvm

__version__ = "0.1.0"
