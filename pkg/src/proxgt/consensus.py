"""Multi-round mixing of stacked per-node vectors.

Stacked vectors are ``(n, p)`` arrays whose row ``i`` is node ``i``'s block;
left-multiplying by the ``n x n`` mixing matrix is the Kronecker action
``(W ⊗ I_p) x``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AsymmetricMatrix, ShapeMismatch
from .graph import WeightMatrix

# below this lambda_star the polynomial recurrence is ill-conditioned and
# W is numerically the averaging matrix anyway
_EXACT_AVERAGE_LAMBDA = 1e-12


@dataclass
class RoundCounter:
    """Cumulative number of communication rounds."""

    rounds: int = 0

    def add(self, k: int) -> None:
        self.rounds += int(k)


def as_stacked(v, n: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.ndim != 2 or v.shape[0] != n:
        raise ShapeMismatch(f"expected {n} node blocks, got array of shape {v.shape}")
    return v


def mix(w: WeightMatrix, v, k: int, counter: RoundCounter | None = None) -> np.ndarray:
    """Apply ``k`` plain gossip rounds, ``W^k v``, one product per round."""
    if k < 0:
        raise ValueError(f"rounds must be >= 0, got {k}")
    out = as_stacked(v, w.n)
    for _ in range(k):
        out = w.entries @ out
    if counter is not None:
        counter.add(k)
    return out if k else out.copy()


def chebyshev_mix(w: WeightMatrix, v, k: int, counter: RoundCounter | None = None) -> np.ndarray:
    """Apply the degree-``k`` Chebyshev accelerated gossip polynomial.

    Computes ``P_k(W) v`` with ``P_k(x) = T_k(x / lam) / T_k(1 / lam)`` and
    ``lam = lambda_star``. Coefficients are propagated as ratios
    ``T_{j-1}(1/lam) / T_j(1/lam)`` so nothing overflows for large ``k``.
    Each recurrence step costs one round, exactly like :func:`mix`.
    """
    if k < 1:
        raise ValueError(f"chebyshev_mix needs k >= 1, got {k}")
    if not w.symmetric:
        raise AsymmetricMatrix("Chebyshev acceleration requires a symmetric mixing matrix")
    lam = w.lambda_star
    if lam < _EXACT_AVERAGE_LAMBDA:
        return mix(w, v, k, counter)
    prev = as_stacked(v, w.n)
    cur = w.entries @ prev
    ratio = lam  # T_0(1/lam) / T_1(1/lam)
    two_over = 2.0 / lam
    for _ in range(k - 1):
        nxt_ratio = 1.0 / (two_over - ratio)
        nxt = (two_over * nxt_ratio) * (w.entries @ cur) - (ratio * nxt_ratio) * prev
        prev, cur, ratio = cur, nxt, nxt_ratio
    if counter is not None:
        counter.add(k)
    return cur


def chebyshev_contraction(lambda_star: float, k: int) -> float:
    """Worst-case deviation factor ``2 rho^k / (1 + rho^(2k))`` of ``chebyshev_mix``."""
    if lambda_star == 0.0:
        return 0.0
    rho = (1.0 - np.sqrt(1.0 - lambda_star**2)) / lambda_star
    return float(2.0 * rho**k / (1.0 + rho ** (2 * k)))


def mean_block(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v.mean(axis=0)


def consensus_error(v) -> float:
    """``||x - Jx||^2 = sum_i ||x_i - xbar||^2``."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    dev = v - v.mean(axis=0)
    return float(np.sum(dev * dev))
