"""Invariant audit: a battery of runtime checks reported as a pass/fail table."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algorithm import IDENTITY_TOL, RunConfig, run
from .config import ExperimentConfig
from .consensus import consensus_error, mix
from .errors import InvariantViolation
from .estimators import EstimatorConfig, GradientEstimator
from .graph import second_singular_value
from .harness import Experiment, build
from .metrics import records_to_csv
from .problems import EmpiricalOracle
from .prox import prox_eval

AUDIT_T = 200


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def _weights(exp: Experiment) -> list[Check]:
    w = np.asarray(exp.w)
    rows = float(np.max(np.abs(w.sum(axis=1) - 1.0)))
    cols = float(np.max(np.abs(w.sum(axis=0) - 1.0)))
    out = [Check("doubly stochastic", rows <= 1e-10 and cols <= 1e-10 and bool(np.all(w >= 0)),
                 f"row dev {rows:.2e}, col dev {cols:.2e}")]
    lam = second_singular_value(w)
    out.append(Check("lambda_star below 1", lam < 1.0 or exp.w.n == 1, f"lambda_star = {lam:.6f}"))
    gen = np.random.default_rng([exp.run_cfg.seed, 11])
    v = gen.standard_normal((exp.w.n, 3))
    before, after = consensus_error(v), consensus_error(mix(exp.w, v, 1))
    out.append(Check("mix contraction", after <= lam**2 * before * (1 + 1e-9) + 1e-15,
                     f"ratio {after / before if before else 0.0:.4f} <= {lam**2:.4f}"))
    return out


def _identities(exp: Experiment, T: int) -> list[Check]:
    rc = exp.run_cfg
    cfg = RunConfig(rc.alpha, rc.K, T, rc.consensus_mode, rc.x0, rc.seed, 1)
    try:
        res = run(cfg, exp.est_cfg, exp.oracle, exp.h, exp.w)
    except InvariantViolation as exc:
        return [Check("tracking identity", False, str(exc)), Check("mean recursion", False, str(exc))]
    return [
        Check("tracking identity", res.max_tracking_residual <= IDENTITY_TOL,
              f"max residual {res.max_tracking_residual:.2e}"),
        Check("mean recursion", res.max_mean_residual <= IDENTITY_TOL,
              f"max residual {res.max_mean_residual:.2e}"),
    ]


def _determinism(exp: Experiment, T: int) -> Check:
    rc = exp.run_cfg
    cfg = RunConfig(rc.alpha, rc.K, T, rc.consensus_mode, rc.x0, rc.seed, 0)
    a = records_to_csv(run(cfg, exp.est_cfg, exp.oracle, exp.h, exp.w).records)
    b = records_to_csv(run(cfg, exp.est_cfg, exp.oracle, exp.h, exp.w, threads=4).records)
    return Check("seeded determinism", a == b, "threads 1 vs 4")


def _prox(exp: Experiment, trials: int = 200) -> Check:
    gen = np.random.default_rng([exp.run_cfg.seed, 13])
    p = exp.oracle.p
    worst = -math.inf
    for _ in range(trials):
        x, y = gen.standard_normal(p) * 3, gen.standard_normal(p) * 3
        lhs = np.linalg.norm(prox_eval(exp.h, exp.run_cfg.alpha, x) - prox_eval(exp.h, exp.run_cfg.alpha, y))
        worst = max(worst, lhs - np.linalg.norm(x - y))
    return Check("prox nonexpansive", worst <= 1e-12, f"worst excess {worst:.2e}")


def _gradients(exp: Experiment) -> Check:
    o = exp.oracle
    gen = np.random.default_rng([exp.run_cfg.seed, 17])
    x = gen.standard_normal(o.p) * 0.5
    grad = o.local_exact_gradient(0, x)
    step = 1e-6
    fd = np.array([(o.local_value(0, x + step * e) - o.local_value(0, x - step * e)) / (2 * step)
                   for e in np.eye(o.p)])
    err = float(np.max(np.abs(fd - grad)) / (1.0 + np.max(np.abs(grad))))
    return Check("gradient vs finite difference", err <= 1e-5, f"rel err {err:.2e}")


def _reset_exact(exp: Experiment) -> Check:
    o = exp.oracle
    if not isinstance(o, EmpiricalOracle):
        return Check("sre reset exact", True, "skipped (population risk)")
    est = GradientEstimator(EstimatorConfig("sre", b=1, q=2), o, seed=exp.run_cfg.seed)
    x = np.random.default_rng([exp.run_cfg.seed, 19]).standard_normal((o.n, o.p))
    v = est.estimate(x, 1)
    exact = np.stack([o.local_exact_gradient(i, x[i]) for i in range(o.n)])
    return Check("sre reset exact", bool(np.array_equal(v, exact)), "bitwise")


def run_audit(cfg: ExperimentConfig, T: int | None = None) -> list[Check]:
    exp = build(cfg)
    T = min(exp.run_cfg.T, AUDIT_T) if T is None else T
    checks = _weights(exp)
    checks += _identities(exp, T)
    checks.append(_determinism(exp, min(T, 50)))
    checks.append(_prox(exp))
    checks.append(_gradients(exp))
    checks.append(_reset_exact(exp))
    return checks


def format_table(checks: list[Check]) -> str:
    width = max(len(c.name) for c in checks)
    lines = [f"{'check'.ljust(width)}  result  detail"]
    for c in checks:
        lines.append(f"{c.name.ljust(width)}  {'PASS' if c.passed else 'FAIL':6}  {c.detail}")
    return "\n".join(lines)
