"""Leading-order critical-path cost predictions for the four BCD variants.

Expressions follow the asymptotic bounds for the 1D-block layouts, with the
constants this implementation actually uses: the Gram kernel charges two
flops per (row, nonzero) pair, each (outer) iteration issues two allreduces
(Gram and residual), and off-layout runs add one all-to-all per (outer)
iteration. f is the density of X and P the rank count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .comm import ceil_log2


@dataclass(frozen=True)
class CostPrediction:
    flops: float
    words: float
    messages: float


def max_load(b: int, P: int) -> float:
    """Balls-into-bins estimate of the most sampled indices on one rank."""
    if P <= 1:
        return float(b)
    logP = math.log(P)
    if b > P * logP:
        eta = b / P + math.sqrt(b * logP / P)
    elif b < P / logP:
        eta = logP / math.log(P / b)
    else:
        eta = math.log(max(b, 3)) / math.log(math.log(max(b, 3)))
    return float(min(b, max(1.0, eta)))


def predict(algo: str, *, H: int, b: int, s: int, d: int, n: int, f: float, P: int,
            natural_layout: bool = True, all_to_all_mode: str = "small") -> CostPrediction:
    """Predicted (F, W, L) for ``H`` iterations of ``algo`` ("bcd", "cabcd", "bdcd", "cabdcd").

    The dual methods swap the roles of d and n. ``s`` is ignored for the
    classical methods.
    """
    if algo not in ("bcd", "cabcd", "bdcd", "cabdcd"):
        raise ValueError(f"no cost model for {algo!r}")
    if not algo.startswith("ca"):
        s = 1
    N = n if algo in ("bcd", "cabcd") else d    # length of a sampled row of the operand
    lg = ceil_log2(P)
    outer = math.ceil(H / s)
    rows = s * b
    F = outer * 2 * rows * rows * f * N / P + H * b ** 3 / 3
    W = outer * (rows * rows + rows) * lg
    L = outer * 2 * lg
    if not natural_layout and P > 1:
        moved = max_load(rows, P) * f * N * (P - 1) / P
        if all_to_all_mode == "small":
            W += outer * moved * lg
            L += outer * lg
        else:
            W += outer * moved
            L += outer * (P - 1)
    return CostPrediction(F, W, L)
