"""Small dense SPD solves for the b x b subproblems."""

from __future__ import annotations

import logging

import numpy as np
from scipy.linalg import lapack

log = logging.getLogger(__name__)


class FactorizationError(np.linalg.LinAlgError):
    def __init__(self, pivot: int, dim: int):
        super().__init__(f"Cholesky failed: leading minor {pivot} of {dim} is not positive")
        self.pivot = pivot


def cholesky_flops(m: int) -> int:
    """Charged cost of factor + two triangular solves: m^3/3 + 2m^2."""
    return m ** 3 // 3 + 2 * m * m


def solve_spd(A: np.ndarray, rhs: np.ndarray, tally=None, retry: bool = True) -> np.ndarray:
    """Solve A x = rhs by Cholesky.

    On a non-positive pivot the factorisation is retried once with a
    ``1e-12 * trace(A) / dim`` diagonal shift (logged); if that fails too,
    :class:`FactorizationError` reports the pivot.
    """
    A = np.asarray(A, dtype=np.float64)
    m = A.shape[0]
    if A.shape != (m, m) or np.shape(rhs)[0] != m:
        raise ValueError("solve_spd: dimension mismatch")
    c, info = lapack.dpotrf(A, lower=1, clean=1)
    if info > 0 and retry:
        shift = 1e-12 * np.trace(A) / m
        log.warning("Cholesky pivot %d failed; retrying with diagonal shift %.3e", info, shift)
        c, info = lapack.dpotrf(A + shift * np.eye(m), lower=1, clean=1)
    if info > 0:
        raise FactorizationError(info, m)
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    x, info = lapack.dpotrs(c, np.asarray(rhs, dtype=np.float64), lower=1)
    if tally is not None:
        tally.add_flops(cholesky_flops(m))
    return x
