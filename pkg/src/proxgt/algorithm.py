"""Proximal stochastic gradient tracking over a network.

Each iteration runs, for every node ``i``::

    v_t        local gradient estimate at x_t
    y_{t+1}  = W^K (y_t + v_t - v_{t-1})          # tracking
    z_{t+1}  = prox_{alpha h}(x_t - alpha y_{t+1})
    x_{t+1}  = W^K z_{t+1}                        # consensus

Two exact identities of this recursion are checked at run time: the
network mean of ``y_{t+1}`` equals the mean of ``v_t``, and the mean iterate
moves by ``-alpha`` times the mean gradient mapping ``(x_t - z_{t+1}) / alpha``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .consensus import RoundCounter, chebyshev_mix, consensus_error, mix
from .errors import BadShape, Diverged, InvariantViolation, MissingConstant, ShapeMismatch
from .estimators import EstimatorConfig, GradientEstimator
from .graph import WeightMatrix
from .metrics import DIVERGENCE_LIMIT, RunRecord
from .problems import ProblemOracle, global_objective
from .prox import Regularizer, in_domain, project, prox_eval

IDENTITY_TOL = 1e-10
CONSENSUS_MODES = ("plain", "chebyshev")


@dataclass(frozen=True)
class RunConfig:
    alpha: float
    K: int = 1
    T: int = 100
    consensus_mode: str = "plain"
    x0: object = None
    seed: int = 0
    invariant_check_every: int = 1

    def __post_init__(self):
        if not (isinstance(self.alpha, (int, float)) and self.alpha > 0 and math.isfinite(self.alpha)):
            raise BadShape(f"alpha must be a positive finite number, got {self.alpha!r}")
        if self.K < 1:
            raise BadShape("K must be >= 1")
        if self.T < 1:
            raise BadShape("T must be >= 1")
        if self.consensus_mode not in CONSENSUS_MODES:
            raise BadShape(f"unknown consensus mode {self.consensus_mode!r}")


@dataclass
class NetworkState:
    t: int
    x: np.ndarray
    y: np.ndarray
    v_prev: np.ndarray
    z_last: np.ndarray | None = None
    x_prev: np.ndarray | None = None
    comm_rounds: int = 0
    tracking_residual: float = 0.0
    mean_residual: float = 0.0


def init_state(oracle: ProblemOracle, x0=None) -> NetworkState:
    """All nodes start at the same point; ``y_1 = 0`` and ``v_0 = 0``."""
    x0 = np.zeros(oracle.p) if x0 is None else np.asarray(x0, dtype=float)
    if x0.shape != (oracle.p,):
        raise ShapeMismatch(f"x0 must have shape ({oracle.p},), got {x0.shape}")
    x = np.tile(x0, (oracle.n, 1))
    return NetworkState(t=1, x=x, y=np.zeros_like(x), v_prev=np.zeros_like(x))


def _mixer(cfg: RunConfig):
    return chebyshev_mix if cfg.consensus_mode == "chebyshev" else mix


def _inf_norm(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


def step(state: NetworkState, cfg: RunConfig, estimator: GradientEstimator, oracle: ProblemOracle,
         h: Regularizer, w: WeightMatrix, check: bool = True) -> NetworkState:
    """Advance one iteration and return the new state."""
    if w.n != oracle.n or state.x.shape != (oracle.n, oracle.p):
        raise ShapeMismatch("state, oracle and weight matrix disagree on the node count")
    combine = _mixer(cfg)
    counter = RoundCounter(state.comm_rounds)
    v = estimator.estimate(state.x, state.t)
    y_new = combine(w, state.y + v - state.v_prev, cfg.K, counter)
    z = prox_eval(h, cfg.alpha, state.x - cfg.alpha * y_new)
    x_new = combine(w, z, cfg.K, counter)
    for name, arr in (("x", x_new), ("y", y_new)):
        if not np.all(np.isfinite(arr)) or _inf_norm(arr) > DIVERGENCE_LIMIT:
            raise Diverged(f"{name} left the divergence box at t={state.t}")

    track = mean_res = 0.0
    if check:
        v_bar = v.mean(axis=0)
        track = _inf_norm(y_new.mean(axis=0) - v_bar) / (1.0 + _inf_norm(v_bar))
        g = (state.x - z) / cfg.alpha
        x_bar = state.x.mean(axis=0)
        predicted = x_bar - cfg.alpha * g.mean(axis=0)
        mean_res = _inf_norm(x_new.mean(axis=0) - predicted) / (1.0 + _inf_norm(x_bar))
        if track > IDENTITY_TOL:
            raise InvariantViolation(f"tracking identity broken at t={state.t}: {track:.3g}")
        if mean_res > IDENTITY_TOL:
            raise InvariantViolation(f"mean recursion broken at t={state.t}: {mean_res:.3g}")
    return NetworkState(
        t=state.t + 1,
        x=x_new,
        y=y_new,
        v_prev=v,
        z_last=z,
        x_prev=state.x,
        comm_rounds=counter.rounds,
        tracking_residual=track,
        mean_residual=mean_res,
    )


def stochastic_gradient_mapping(state: NetworkState, alpha: float) -> np.ndarray:
    """``g_t^i = (x_t^i - z_{t+1}^i) / alpha`` for the step that produced ``state``."""
    if state.z_last is None or state.x_prev is None:
        raise BadShape("no completed step to read the gradient mapping from")
    return (state.x_prev - state.z_last) / alpha


def gradient_mapping(oracle: ProblemOracle, h: Regularizer, alpha: float, x) -> np.ndarray:
    """``s(x) = (x - prox_{alpha h}(x - alpha grad F(x))) / alpha`` with the exact
    global gradient. Points outside dom(h) are projected onto it first."""
    x = np.asarray(x, dtype=float)
    if h.is_indicator and not in_domain(h, x):
        x = project(h, x)
    grad = oracle.global_gradient(x)
    return (x - prox_eval(h, alpha, x - alpha * grad)) / alpha


def stationarity_terms(oracle: ProblemOracle, h: Regularizer, alpha: float, x_stack) -> tuple[float, float]:
    """Split the per-iteration metric into ``(mean ||s(x_i)||^2, L^2 ||x - Jx||^2 / n)``."""
    x_stack = np.asarray(x_stack, dtype=float)
    points = project(h, x_stack) if h.is_indicator else x_stack
    grads = oracle.global_gradient_many(points)
    s = (points - prox_eval(h, alpha, points - alpha * grads)) / alpha
    gap = float(np.sum(s * s) / oracle.n)
    cons = oracle.L**2 * consensus_error(x_stack) / oracle.n
    return gap, cons


def stationarity_metric(oracle: ProblemOracle, h: Regularizer, alpha: float, state: NetworkState) -> float:
    gap, cons = stationarity_terms(oracle, h, alpha, state.x)
    return gap + cons


@dataclass
class RunResult:
    records: list
    state: NetworkState
    max_tracking_residual: float = 0.0
    max_mean_residual: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def x_bar(self) -> np.ndarray:
        return self.state.x.mean(axis=0)


def run(cfg: RunConfig, estimator_cfg: EstimatorConfig, oracle: ProblemOracle, h: Regularizer,
        w: WeightMatrix, threads: int = 1) -> RunResult:
    """Run ``cfg.T`` iterations, logging one record per iterate ``x_1 .. x_T``.

    Records are computed before the step at ``t``; the sample and round
    counters include the work of step ``t`` itself.
    """
    estimator = GradientEstimator(estimator_cfg, oracle, seed=cfg.seed, threads=threads)
    state = init_state(oracle, cfg.x0)
    records = []
    total = 0.0
    max_track = max_mean = 0.0
    start = time.perf_counter_ns()
    try:
        for t in range(1, cfg.T + 1):
            gap, cons = stationarity_terms(oracle, h, cfg.alpha, state.x)
            term = gap + cons
            total += term
            x_bar = state.x.mean(axis=0)
            psi = global_objective(oracle, h, x_bar)
            check = cfg.invariant_check_every > 0 and (t - 1) % cfg.invariant_check_every == 0
            try:
                state = step(state, cfg, estimator, oracle, h, w, check=check)
            except Diverged as exc:
                raise Diverged(str(exc), records) from None
            max_track = max(max_track, state.tracking_residual)
            max_mean = max(max_mean, state.mean_residual)
            records.append(RunRecord(
                t=t,
                stat_term=term,
                stat_running_mean=total / t,
                consensus_err=consensus_error(state.x_prev),
                psi=psi,
                psi_is_proxy=oracle.value_is_proxy,
                samples_per_node=int(estimator.samples.max()),
                comm_rounds=state.comm_rounds,
                elapsed_ns=time.perf_counter_ns() - start,
            ))
    finally:
        estimator.close()
    return RunResult(records, state, max_track, max_mean)


# ---------------------------------------------------------------------------
# parameter presets


THEOREMS = {"sa": "sa", "sro": "sro", "sre": "sre"}

DEFAULT_MULTIPLIERS = {"K": 1.0, "alpha": 1.0, "b": 1.0, "B": 1.0, "q": 1.0, "T": 1.0}


def initial_gradient_spread(oracle: ProblemOracle, x1) -> float:
    """``zeta = sqrt((1/n) sum_i ||grad f_i(x1)||^2)``."""
    x1 = np.asarray(x1, dtype=float)
    grads = np.stack([oracle.local_exact_gradient(i, x1) for i in range(oracle.n)])
    return float(math.sqrt(np.sum(grads * grads) / oracle.n))


def prescribed_rounds(lambda_star: float, log_arg: float, multiplier: float = 1.0, accelerated: bool = False) -> int:
    """``ceil(c log(arg) / gap)``, ``gap = 1 - lambda_star`` (its square root under
    Chebyshev acceleration), clamped to at least one round."""
    gap = 1.0 - lambda_star
    if accelerated:
        gap = math.sqrt(gap)
    if log_arg <= 1.0:
        return 1
    return max(1, math.ceil(multiplier * math.log(log_arg) / gap))


def theorem_defaults(theorem: str, oracle: ProblemOracle, w: WeightMatrix, epsilon: float,
                     multipliers: dict | None = None, x1=None, psi_lower: float = 0.0,
                     nu: float | None = None, h: Regularizer | None = None,
                     consensus_mode: str = "plain", seed: int = 0) -> tuple[RunConfig, EstimatorConfig]:
    """Parameters prescribed by the complexity bounds, with every hidden
    universal constant exposed as a multiplier (default 1).

    ``psi_lower`` is the user's lower bound on the objective used for the
    initial gap ``Psi(x1) - psi_lower``.
    """
    if theorem not in THEOREMS:
        raise BadShape(f"unknown theorem preset {theorem!r}")
    if not epsilon > 0:
        raise BadShape("epsilon must be positive")
    c = dict(DEFAULT_MULTIPLIERS)
    c.update(multipliers or {})
    unknown = set(c) - set(DEFAULT_MULTIPLIERS)
    if unknown:
        raise BadShape(f"unknown multipliers {sorted(unknown)}")
    h = h or Regularizer()
    x1 = np.zeros(oracle.p) if x1 is None else np.asarray(x1, dtype=float)
    n = oracle.n
    zeta = initial_gradient_spread(oracle, x1)
    accelerated = consensus_mode == "chebyshev"
    log_arg = zeta if theorem == "sre" else n * zeta
    K = prescribed_rounds(w.lambda_star, log_arg, c["K"], accelerated)
    alpha = c["alpha"] / oracle.L
    psi1 = global_objective(oracle, h, x1)
    delta = max(0.0, float(psi1) - psi_lower) if math.isfinite(float(psi1)) else 0.0
    T = max(1, math.ceil(c["T"] * oracle.L * delta / epsilon**2))

    if theorem in ("sa", "sro"):
        nu = oracle.nu if nu is None else nu
        if nu is None:
            raise MissingConstant("the variance bound nu is required for the sa/sro presets")
    if theorem == "sa":
        b = max(1, math.ceil(c["b"] * nu**2 / (n * epsilon**2)))
        est = EstimatorConfig("sa", b=b)
    elif theorem == "sro":
        q = max(1, math.ceil(c["q"] * nu / epsilon))
        b = max(1, math.ceil(c["b"] * nu / (n * epsilon)))
        B = max(b, math.ceil(c["B"] * nu**2 / (n * epsilon**2)))
        est = EstimatorConfig("sro", b=b, B=B, q=q)
        T += q
    else:
        if oracle.m is None:
            raise MissingConstant("the sre preset needs the local sample count m")
        m = oracle.m
        q = max(1, math.ceil(c["q"] * math.sqrt(n * m)))
        b = max(1, math.ceil(c["b"] * max(math.sqrt(m / n), 1.0)))
        est = EstimatorConfig("sre", b=b, q=q)
        T += q
    cfg = RunConfig(alpha=alpha, K=K, T=T, consensus_mode=consensus_mode, x0=x1, seed=seed)
    return cfg, est


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, **changes)
