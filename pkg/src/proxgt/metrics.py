"""Run records, centralized baselines and threshold statistics."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import rng as rngs
from .errors import Diverged
from .problems import EmpiricalOracle, ProblemOracle, global_objective
from .prox import PLUS_INF, Regularizer, prox_eval

CSV_COLUMNS = (
    "t",
    "stat_term",
    "stat_running_mean",
    "consensus_err",
    "psi",
    "psi_is_proxy",
    "samples_per_node",
    "comm_rounds",
    "elapsed_ns",
)

DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class RunRecord:
    t: int
    stat_term: float
    stat_running_mean: float
    consensus_err: float
    psi: object
    psi_is_proxy: bool
    samples_per_node: int
    comm_rounds: int
    elapsed_ns: int = 0


class _NotReached:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NOT_REACHED"

    def __bool__(self):
        return False


NOT_REACHED = _NotReached()


def _fmt(value) -> str:
    if value is PLUS_INF:
        return "inf"
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def records_to_csv(records, timing: bool = False) -> str:
    """Render records in the fixed column order.

    ``elapsed_ns`` is written as 0 unless ``timing`` is set, so repeated runs
    with one seed produce byte-identical files.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        row = asdict(rec)
        if not timing:
            row["elapsed_ns"] = 0
        writer.writerow([_fmt(row[col]) for col in CSV_COLUMNS])
    return buf.getvalue()


def write_csv(records, path: str | Path, timing: bool = False) -> None:
    Path(path).write_text(records_to_csv(records, timing), encoding="utf-8")


def read_csv(path: str | Path) -> list[RunRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            psi = PLUS_INF if row["psi"] == "inf" else float(row["psi"])
            out.append(RunRecord(
                t=int(row["t"]),
                stat_term=float(row["stat_term"]),
                stat_running_mean=float(row["stat_running_mean"]),
                consensus_err=float(row["consensus_err"]),
                psi=psi,
                psi_is_proxy=row["psi_is_proxy"] == "1",
                samples_per_node=int(row["samples_per_node"]),
                comm_rounds=int(row["comm_rounds"]),
                elapsed_ns=int(row["elapsed_ns"]),
            ))
    return out


def samples_to_threshold(records, epsilon: float):
    """Per-node samples at the first ``t`` whose running-mean metric is
    at most ``epsilon**2``; :data:`NOT_REACHED` otherwise."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    target = epsilon * epsilon
    for rec in records:
        if rec.stat_running_mean <= target:
            return rec.samples_per_node
    return NOT_REACHED


def iterations_to_threshold(records, epsilon: float):
    target = epsilon * epsilon
    for rec in records:
        if rec.stat_running_mean <= target:
            return rec.t
    return NOT_REACHED


def running_means(stat_terms) -> np.ndarray:
    terms = np.asarray(stat_terms, dtype=float)
    return np.cumsum(terms) / np.arange(1, terms.size + 1)


def summary(records, config_echo: dict | None = None, epsilons=(), extra: dict | None = None) -> dict:
    last = records[-1] if records else None
    out = {
        "config": config_echo or {},
        "iterations": len(records),
        "final": None if last is None else {
            "t": last.t,
            "stat_term": last.stat_term,
            "stat_running_mean": last.stat_running_mean,
            "consensus_err": last.consensus_err,
            "psi": float(last.psi) if last.psi is not PLUS_INF else "inf",
            "psi_is_proxy": bool(last.psi_is_proxy),
            "samples_per_node": last.samples_per_node,
            "comm_rounds": last.comm_rounds,
        },
        "thresholds": {},
    }
    for eps in epsilons:
        hit = samples_to_threshold(records, eps)
        out["thresholds"][repr(float(eps))] = None if hit is NOT_REACHED else hit
    if extra:
        out.update(extra)
    return out


def summary_json(summary_dict: dict) -> str:
    return json.dumps(summary_dict, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# centralized baselines


@dataclass
class Trajectory:
    """Iterates ``x[0..T]`` of a centralized method plus per-step records."""

    x: np.ndarray
    records: list


def _central_record(oracle, h, alpha, x, t, total, samples):
    grad = oracle.global_gradient(x)
    s = (x - prox_eval(h, alpha, x - alpha * grad)) / alpha
    term = float(s @ s)
    psi = global_objective(oracle, h, x)
    return term, RunRecord(t, term, (total + term) / t, 0.0, psi, oracle.value_is_proxy, samples, 0)


def _check_bounded(x, records):
    if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_LIMIT:
        raise Diverged("centralized iterate left the divergence box", records)


def centralized_prox_gd(oracle: ProblemOracle, h: Regularizer, alpha: float, T: int, x0) -> Trajectory:
    """``x_{t+1} = prox_{alpha h}(x_t - alpha grad F(x_t))`` with exact gradients."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    x = np.asarray(x0, dtype=float).copy()
    xs = [x.copy()]
    records, total = [], 0.0
    cost = oracle.n * (oracle.m or 0)
    for t in range(1, T + 1):
        term, rec = _central_record(oracle, h, alpha, x, t, total, t * cost)
        total += term
        records.append(rec)
        x = prox_eval(h, alpha, x - alpha * oracle.global_gradient(x))
        _check_bounded(x, records)
        xs.append(x.copy())
    return Trajectory(np.array(xs), records)


def _pooled_gradient(oracle, x, batch_size, gen, full_pass):
    """Minibatch gradient of ``F`` drawn from the pooled data/distribution."""
    if full_pass:
        return oracle.global_gradient(x)
    nodes = gen.integers(0, oracle.n, size=batch_size)
    counts = np.bincount(nodes, minlength=oracle.n)
    total = np.zeros(oracle.p)
    for i in np.flatnonzero(counts):
        batch = oracle.sample_batch(int(i), 0, int(counts[i]), gen)
        total += counts[i] * oracle.stochastic_gradient(int(i), x, batch)
    return total / batch_size


def centralized_minibatch_prox_sgd(oracle: ProblemOracle, h: Regularizer, alpha: float, b_total: int, T: int,
                                   seed: int = 0, x0=None, full_pass: bool = False) -> Trajectory:
    """Single-node proximal SGD drawing ``b_total`` samples per step.

    Each sample picks a node uniformly and then a sample of that node, so the
    draw is uniform over the pooled data. ``full_pass`` replaces the draw by
    the exact pooled gradient (empirical oracles only).
    """
    if b_total < 1:
        raise ValueError("b_total must be >= 1")
    if full_pass and not isinstance(oracle, EmpiricalOracle):
        raise ValueError("full-pass needs an empirical oracle")
    x = np.zeros(oracle.p) if x0 is None else np.asarray(x0, dtype=float).copy()
    xs = [x.copy()]
    records, total = [], 0.0
    for t in range(1, T + 1):
        term, rec = _central_record(oracle, h, alpha, x, t, total, t * b_total)
        total += term
        records.append(rec)
        gen = rngs.stream(seed, 0, t, rngs.CENTRAL)
        grad = _pooled_gradient(oracle, x, b_total, gen, full_pass)
        x = prox_eval(h, alpha, x - alpha * grad)
        _check_bounded(x, records)
        xs.append(x.copy())
    return Trajectory(np.array(xs), records)
