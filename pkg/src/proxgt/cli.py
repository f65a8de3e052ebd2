"""Command-line entry point: ``proxgt {run,sweep,audit,gap}``.

Exit codes: 0 success, 1 configuration or input error, 2 divergence,
3 invariant failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .algorithm import initial_gradient_spread, prescribed_rounds
from .audit import format_table, run_audit
from .config import ExperimentConfig, parse_config, render_config
from .errors import ConfigError, InvariantViolation, ProxGTError
from .graph import metropolis_weights, parse_topology, spectral_gap
from .harness import build_oracle, env_threads, execute, sweep_grid

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_INVARIANT = 0, 1, 2, 3

log = logging.getLogger("proxgt")


def _load(args) -> ExperimentConfig:
    text = ""
    if args.config is not None:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror or exc}") from exc
    return parse_config(text, args.set or ())


def _cmd_run(args) -> int:
    cfg = _load(args)
    threads = env_threads()
    status = EXIT_OK
    for rep in range(cfg.run.repetitions):
        out = execute(cfg, threads=threads, repetition=rep)
        if out.diverged:
            print(f"error: run diverged: {out.message} (partial trace in {out.csv_path})", file=sys.stderr)
            return EXIT_DIVERGED
        last = out.records[-1]
        print(f"{out.csv_path}  T={last.t}  stat_running_mean={last.stat_running_mean:.6g}  "
              f"samples_per_node={last.samples_per_node}  comm_rounds={last.comm_rounds}")
    return status


def _sweep_job(text: str) -> tuple[str, str, int, str, float | None, int]:
    cfg = parse_config(text)
    try:
        out = execute(cfg, threads=1)
    except InvariantViolation as exc:
        return (cfg.graph.topology, cfg.run.theorem or cfg.estimator.kind, cfg.problem.n,
                f"invariant: {exc}", None, EXIT_INVARIANT)
    kind = cfg.run.theorem or cfg.estimator.kind
    if out.diverged:
        return (cfg.graph.topology, kind, cfg.problem.n, str(out.csv_path), None, EXIT_DIVERGED)
    return (cfg.graph.topology, kind, cfg.problem.n, str(out.csv_path),
            out.records[-1].stat_running_mean, EXIT_OK)


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    texts = [render_config(point) for point in sweep_grid(cfg)]
    workers = min(env_threads(), len(texts))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_job, texts))
    else:
        rows = [_sweep_job(t) for t in texts]
    print(f"{'topology':<14}{'estimator':<10}{'n':>5}  {'stat_running_mean':>18}  output")
    worst = EXIT_OK
    for topo, kind, n, path, value, code in rows:
        shown = "-" if value is None else f"{value:.6g}"
        print(f"{topo:<14}{kind:<10}{n:>5}  {shown:>18}  {path}")
        worst = max(worst, code)
    return worst


def _cmd_audit(args) -> int:
    cfg = _load(args) if (args.config or args.set) else _default_audit_config()
    checks = run_audit(cfg, T=args.T)
    print(format_table(checks))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_INVARIANT


def _default_audit_config() -> ExperimentConfig:
    return parse_config("\n".join([
        "problem.kind = least_squares", "problem.n = 4", "problem.p = 5", "problem.m = 50",
        "graph.topology = ring", "estimator.kind = sa", "estimator.b = 4",
        "run.alpha = 0.5/L", "run.K = 2", "run.T = 100",
    ]))


def _cmd_gap(args) -> int:
    topologies = [t.strip() for t in args.topology.split(",") if t.strip()]
    sizes = [int(s) for s in args.n.split(",") if s.strip()]
    zeta = args.zeta
    if args.config is not None or args.set:
        cfg = _load(args)
        topologies, sizes = [cfg.graph.topology], [cfg.problem.n]
        oracle = build_oracle(cfg)
        zeta = initial_gradient_spread(oracle, np.full(oracle.p, float(cfg.run.x0)))
    accelerated = args.consensus == "chebyshev"
    print(f"{'n':>4}  {'kind':<14}{'lambda_star':>12}  {'gap':>10}  {'K':>6}")
    for topo in topologies:
        for n in sizes:
            w = metropolis_weights(parse_topology(topo, n))
            K = prescribed_rounds(w.lambda_star, n * zeta, 1.0, accelerated)
            print(f"{n:>4}  {topo:<14}{w.lambda_star:>12.6f}  {spectral_gap(w):>10.6f}  {K:>6}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proxgt", description="Decentralized proximal gradient tracking experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required):
        p.add_argument("--config", required=config_required, help="path to a section.key = value file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one key (repeatable)")

    p_run = sub.add_parser("run", help="run one experiment and write CSV + JSON")
    common(p_run, True)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run the topology x estimator x n grid")
    common(p_sweep, True)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_audit = sub.add_parser("audit", help="run the invariant suite and print a pass/fail table")
    common(p_audit, False)
    p_audit.add_argument("--T", type=int, default=None, help="iterations per audited run")
    p_audit.set_defaults(func=_cmd_audit)

    p_gap = sub.add_parser("gap", help="print lambda_star and prescribed K per topology")
    common(p_gap, False)
    p_gap.add_argument("--topology", default="ring", help="comma-separated topology specs")
    p_gap.add_argument("--n", default="4", help="comma-separated node counts")
    p_gap.add_argument("--zeta", type=float, default=1.0, help="initial gradient spread used for K")
    p_gap.add_argument("--consensus", choices=("plain", "chebyshev"), default="plain")
    p_gap.set_defaults(func=_cmd_gap)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"error: invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ProxGTError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
