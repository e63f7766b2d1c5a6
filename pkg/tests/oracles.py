"""Dense reference implementations used as test oracles.

These follow the textbook update formulas directly with dense numpy
matrices and share nothing with the package except the block sampler, so
the sampled index sequence is the same.
"""

import numpy as np

from cabcd.solvers.sampling import sample_block


def ridge_solution(Xd, y, lam):
    d, n = Xd.shape
    return np.linalg.solve(Xd @ Xd.T / n + lam * np.eye(d), Xd @ y / n)


def dual_solution(Xd, y, lam):
    """alpha_opt from (X.T X/(lam n^2) + I/n) alpha = -(1/n) y."""
    d, n = Xd.shape
    A = Xd.T @ Xd / (lam * n * n) + np.eye(n) / n
    return np.linalg.solve(A, -y / n)


def primal_obj(Xd, w, y, lam):
    n = y.size
    r = Xd.T @ w - y
    return 0.5 * r @ r / n + 0.5 * lam * w @ w


def dual_obj(Xd, alpha, y, lam):
    n = y.size
    v = Xd @ alpha / (lam * n)
    r = alpha + y
    return 0.5 * lam * v @ v + 0.5 * r @ r / n


def dense_bcd(Xd, y, lam, b, H, seed):
    """Primal BCD iterates w_0..w_H, recomputing everything from scratch."""
    d, n = Xd.shape
    w = np.zeros(d)
    out = [w.copy()]
    for h in range(1, H + 1):
        I = sample_block(seed, h, d, b).indices
        XI = Xd[I]
        gamma = XI @ XI.T / n + lam * np.eye(b)
        rhs = -lam * w[I] - XI @ (Xd.T @ w) / n + XI @ y / n
        w[I] += np.linalg.solve(gamma, rhs)
        out.append(w.copy())
    return out


def dense_bdcd(Xd, y, lam, b, H, seed):
    """Dual BDCD iterates (alpha_h, w_h) for h = 0..H."""
    d, n = Xd.shape
    alpha = np.zeros(n)
    w = np.zeros(d)
    out = [(alpha.copy(), w.copy())]
    for h in range(1, H + 1):
        I = sample_block(seed, h, n, b).indices
        XI = Xd[:, I]
        theta = XI.T @ XI / (lam * n * n) + np.eye(b) / n
        da = -np.linalg.solve(theta, -XI.T @ w + alpha[I] + y[I]) / n
        alpha[I] += da
        w = -Xd @ alpha / (lam * n)
        out.append((alpha.copy(), w.copy()))
    return out
