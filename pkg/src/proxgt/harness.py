"""Turn an :class:`ExperimentConfig` into runs and output files."""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .algorithm import RunConfig, RunResult, run, theorem_defaults
from .config import ExperimentConfig, render_config, resolve_alpha, validate
from .errors import Diverged
from .estimators import EstimatorConfig
from .graph import WeightMatrix, load_weight_csv, metropolis_weights, parse_topology, validate_weight_matrix
from .metrics import summary, summary_json, write_csv
from .problems import ProblemOracle, estimate_nu, oracle_from_dataset, synthesize_problem
from .prox import Regularizer, parse_regularizer

THREADS_ENV = "PROXGT_THREADS"


def env_threads(default: int = 1) -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or not raw.strip():
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        return default


@dataclass
class Experiment:
    config: ExperimentConfig
    oracle: ProblemOracle
    h: Regularizer
    w: WeightMatrix
    run_cfg: RunConfig
    est_cfg: EstimatorConfig


def build_oracle(cfg: ExperimentConfig) -> ProblemOracle:
    p = cfg.problem
    if p.dataset:
        return oracle_from_dataset(p.kind, p.dataset, p.n, p.partition, seed=cfg.run.seed, a_reg=p.a)
    return synthesize_problem(p.kind, p.n, p.p, p.m, p.heterogeneity, seed=cfg.run.seed,
                              risk=p.risk, a_reg=p.a, noise=p.noise)


def build_weights(cfg: ExperimentConfig, n: int) -> WeightMatrix:
    g = parse_topology(cfg.graph.topology, n)
    if cfg.graph.weights:
        return validate_weight_matrix(load_weight_csv(cfg.graph.weights), g)
    return metropolis_weights(g, lazy=cfg.graph.lazy)


def build(cfg: ExperimentConfig) -> Experiment:
    validate(cfg)
    oracle = build_oracle(cfg)
    h = parse_regularizer(cfg.problem.regularizer)
    w = build_weights(cfg, oracle.n)
    r = cfg.run
    x0 = np.full(oracle.p, float(r.x0))
    if r.theorem is not None:
        mult = {k: getattr(r, f"mult_{k}") for k in ("K", "alpha", "b", "B", "q", "T")}
        if r.theorem in ("sa", "sro"):
            estimate_nu(oracle, x0, seed=r.seed)
        run_cfg, est_cfg = theorem_defaults(r.theorem, oracle, w, r.epsilon, mult, x1=x0,
                                            psi_lower=r.psi_lower, h=h, consensus_mode=r.consensus,
                                            seed=r.seed)
        run_cfg = RunConfig(run_cfg.alpha, run_cfg.K, run_cfg.T, r.consensus, x0, r.seed, r.check_every)
        if cfg.estimator.full_pass:
            est_cfg = EstimatorConfig(est_cfg.kind, est_cfg.b, est_cfg.B, est_cfg.q, True)
    else:
        e = cfg.estimator
        est_cfg = EstimatorConfig(e.kind, b=e.b or 1, B=e.B or (e.b or 1), q=e.q or 1, full_pass=e.full_pass)
        run_cfg = RunConfig(resolve_alpha(r.alpha, oracle.L), r.K, r.T, r.consensus, x0, r.seed, r.check_every)
    return Experiment(cfg, oracle, h, w, run_cfg, est_cfg)


def describe(exp: Experiment) -> dict:
    """Resolved numeric parameters, echoed next to the config in the summary."""
    rc, ec = exp.run_cfg, exp.est_cfg
    return {
        "alpha": rc.alpha, "K": rc.K, "T": rc.T, "consensus": rc.consensus_mode,
        "estimator": {"kind": ec.kind, "b": ec.b, "B": ec.B, "q": ec.q, "full_pass": ec.full_pass},
        "L": exp.oracle.L, "lambda_star": exp.w.lambda_star,
    }


@dataclass
class RunOutcome:
    result: RunResult | None
    records: list
    csv_path: Path
    json_path: Path
    diverged: bool = False
    message: str = ""


def output_stem(cfg: ExperimentConfig, repetition: int) -> str:
    stem = cfg.digest()
    return stem if cfg.run.repetitions <= 1 else f"{stem}-r{repetition}"


def execute(cfg: ExperimentConfig, threads: int = 1, repetition: int = 0) -> RunOutcome:
    """Run one repetition and write ``<hash>.csv`` and ``<hash>.json``.

    Repetition ``k`` uses sampling seed ``run.seed + k`` over the same data.
    Divergence still writes the partial trace before reporting.
    """
    exp = build(cfg)
    run_cfg = exp.run_cfg
    if repetition:
        run_cfg = RunConfig(run_cfg.alpha, run_cfg.K, run_cfg.T, run_cfg.consensus_mode, run_cfg.x0,
                            run_cfg.seed + repetition, run_cfg.invariant_check_every)
    out_dir = Path(cfg.output.dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = output_stem(cfg, repetition)
    csv_path, json_path = out_dir / f"{stem}.csv", out_dir / f"{stem}.json"
    extra = {"resolved": describe(exp), "repetition": repetition, "config_text": render_config(cfg)}
    try:
        result = run(run_cfg, exp.est_cfg, exp.oracle, exp.h, exp.w, threads=threads)
    except Diverged as exc:
        write_csv(exc.records, csv_path, cfg.output.timing)
        extra["diverged"] = str(exc)
        json_path.write_text(summary_json(summary(exc.records, cfg.as_dict(), (), extra)), encoding="utf-8")
        return RunOutcome(None, exc.records, csv_path, json_path, True, str(exc))
    # rounds count every W application; the per-update convention counts W^K once
    extra["communication"] = {"rounds": result.state.comm_rounds,
                              "mixing_updates": 2 * len(result.records),
                              "rounds_per_update": run_cfg.K}
    extra["max_tracking_residual"] = result.max_tracking_residual
    extra["max_mean_residual"] = result.max_mean_residual
    write_csv(result.records, csv_path, cfg.output.timing)
    json_path.write_text(summary_json(summary(result.records, cfg.as_dict(), cfg.output.epsilons, extra)),
                         encoding="utf-8")
    return RunOutcome(result, result.records, csv_path, json_path)


def sweep_grid(cfg: ExperimentConfig) -> list[ExperimentConfig]:
    """Cartesian product over the sweep axes; empty axes keep the base value."""
    s = cfg.sweep
    topologies = s.topology or (cfg.graph.topology,)
    kinds = s.estimator or ((cfg.run.theorem or cfg.estimator.kind),)
    sizes = s.n or (cfg.problem.n,)
    out = []
    for topo, kind, n in itertools.product(topologies, kinds, sizes):
        changes = {"graph__topology": topo, "problem__n": int(n)}
        if cfg.run.theorem is not None:
            changes["run__theorem"] = kind
            changes["estimator__kind"] = None
        else:
            changes["estimator__kind"] = kind
        point = cfg.with_values(**changes)
        validate(point)
        out.append(point)
    return out
