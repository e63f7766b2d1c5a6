"""Serial stopping-criterion helpers (driver side, not charged)."""

from __future__ import annotations

import numpy as np

from ..sparse import CsrMatrix
from .config import DualState, PrimalState, SolverConfig


def primal_residual(X: CsrMatrix, w: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """Gradient of the primal objective: (1/n) X (X.T w - y) + lam w."""
    S = X.to_scipy()
    n = X.n_cols
    return S @ (S.T @ w - y) / n + lam * w


def dual_residual(X: CsrMatrix, alpha: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """alpha - X.T w(alpha) + y with w(alpha) = -(1/(lam n)) X alpha; zero at the optimum."""
    S = X.to_scipy()
    n = X.n_cols
    w = -(S @ alpha) / (lam * n)
    return alpha - S.T @ w + y


def check_stopping(state, X: CsrMatrix, y: np.ndarray, cfg: SolverConfig) -> bool:
    """True when the residual norm is within tolerance (tighter for the dual)."""
    if isinstance(state, PrimalState):
        r = primal_residual(X, state.w, y, cfg.lam)
        tol = cfg.tol
    elif isinstance(state, DualState):
        r = dual_residual(X, state.alpha, y, cfg.lam)
        tol = cfg.tol * cfg.dual_tol_factor
    else:
        raise TypeError(f"unsupported state {type(state).__name__}")
    return bool(np.linalg.norm(r) <= tol)
