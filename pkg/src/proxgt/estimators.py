"""Local gradient estimators ``v_t^i`` (exact, minibatch SA, SARAH online/exact).

Iterations count from 1. A SARAH estimator restarts whenever
``(t - 1) % q == 0``, i.e. at ``t = 1, q + 1, 2q + 1, ...``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng as rngs
from .errors import BadShape, MissingPrevIterate, OracleError, ProxGTError
from .problems import ProblemOracle

KINDS = ("exact", "sa", "sro", "sre")


@dataclass(frozen=True)
class EstimatorConfig:
    kind: str = "exact"
    b: int = 1
    B: int = 1
    q: int = 1
    full_pass: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BadShape(f"unknown estimator kind {self.kind!r}")
        if self.b < 1:
            raise BadShape("batch size b must be >= 1")
        if self.kind == "sro" and not self.B >= self.b:
            raise BadShape("sro requires B >= b")
        if self.q < 1:
            raise BadShape("period q must be >= 1")


def is_reset(t: int, q: int) -> bool:
    return (t - 1) % q == 0


class GradientEstimator:
    """Stateful v_t generator for all nodes of one run.

    State per node: the previous estimate, the previous iterate and the
    cumulative number of gradient samples consumed.
    """

    def __init__(self, cfg: EstimatorConfig, oracle: ProblemOracle, seed: int = 0, threads: int = 1):
        if cfg.kind == "sre" and oracle.risk != "empirical":
            raise BadShape("SR-E needs an empirical-risk oracle")
        if cfg.full_pass and oracle.risk != "empirical":
            raise BadShape("full-pass sampling needs an empirical-risk oracle")
        self.cfg = cfg
        self.oracle = oracle
        self.seed = seed
        self.threads = max(1, int(threads))
        self._pool = ThreadPoolExecutor(self.threads) if self.threads > 1 else None
        self.t = 0
        self.v_prev = np.zeros((oracle.n, oracle.p))
        self.x_prev: np.ndarray | None = None
        self.samples = np.zeros(oracle.n, dtype=np.int64)

    def _exact_cost(self) -> int:
        return self.oracle.m if self.oracle.risk == "empirical" else 0

    def _node(self, i: int, t: int, x_t: np.ndarray) -> tuple[np.ndarray, int]:
        cfg, o = self.cfg, self.oracle
        x = x_t[i]
        if cfg.kind == "exact":
            return o.local_exact_gradient(i, x), self._exact_cost()
        gen = rngs.stream(self.seed, i, t)
        if cfg.kind == "sa":
            batch = o.sample_batch(i, t, cfg.b, gen, cfg.full_pass)
            return o.stochastic_gradient(i, x, batch), cfg.b
        if is_reset(t, cfg.q):
            if cfg.kind == "sre":
                return o.local_exact_gradient(i, x), self._exact_cost()
            batch = o.sample_batch(i, t, cfg.B, gen)
            return o.stochastic_gradient(i, x, batch), cfg.B
        if self.x_prev is None:
            raise MissingPrevIterate(f"recursive step at t={t} without a previous iterate")
        batch = o.sample_batch(i, t, cfg.b, gen, cfg.full_pass)
        diff = o.paired_gradient_difference(i, x, self.x_prev[i], batch)
        return diff + self.v_prev[i], cfg.b

    def estimate(self, x_t, t: int | None = None) -> np.ndarray:
        """Return the ``(n, p)`` stack ``v_t`` for iterate stack ``x_t``."""
        t = self.t + 1 if t is None else t
        if t < 1:
            raise BadShape("iterations count from 1")
        x_t = np.asarray(x_t, dtype=float)
        try:
            if self._pool is not None:
                parts = list(self._pool.map(lambda i: self._node(i, t, x_t), range(self.oracle.n)))
            else:
                parts = [self._node(i, t, x_t) for i in range(self.oracle.n)]
        except ProxGTError:
            raise
        except (ValueError, FloatingPointError) as exc:
            raise OracleError(str(exc)) from exc
        v = np.stack([part[0] for part in parts])
        self.samples += np.array([part[1] for part in parts], dtype=np.int64)
        self.v_prev = v
        self.x_prev = x_t.copy()
        self.t = t
        return v

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def sample_count(self) -> np.ndarray:
        return self.samples.copy()


def expected_samples(cfg: EstimatorConfig, T: int, m: int | None = None) -> int:
    """Closed-form per-node sample count after ``T`` iterations."""
    resets = sum(1 for t in range(1, T + 1) if is_reset(t, cfg.q))
    if cfg.kind == "exact":
        return T * (m or 0)
    if cfg.kind == "sa":
        return T * cfg.b
    if cfg.kind == "sro":
        return resets * cfg.B + (T - resets) * cfg.b
    return resets * (m or 0) + (T - resets) * cfg.b
