"""Command-line front end."""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings

import numpy as np

from .data import DataError, QueryStream, SyntheticSpec, gen_queries, gen_synthetic, load_dataset, write_dataset, write_queries
from .session import (
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_EXHAUSTED,
    EXIT_OK,
    PLOT_KINDS,
    PROTOCOLS,
    SessionConfig,
    SessionRunner,
    emit_plot_data,
    run_session,
)
from .trainpriv import gamma_amplification

SEED_ENV = "DPEXPLAIN_SEED"


def _session_flags(p: argparse.ArgumentParser, protocol_default: str = "adaptive") -> None:
    p.add_argument("--protocol", choices=PROTOCOLS, default=protocol_default)
    p.add_argument("--eps", type=float, default=1.0, help="total epsilon budget")
    p.add_argument("--delta", type=float, default=1e-5, help="total delta budget")
    p.add_argument("--eps-min", type=float, default=0.01, help="per-query epsilon")
    p.add_argument("--delta-min", type=float, default=1e-7, help="per-query delta")
    p.add_argument("--T", type=int, default=300, help="iteration parameter")
    p.add_argument("--c", type=float, default=1.0, help="weight scale")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shards", type=int, default=1)
    p.add_argument("--then-noninteractive", action="store_true")
    p.add_argument("--oracle", action="store_true", help="report utility loss against a noiseless solve")
    p.add_argument("--oracle-iters", type=int, default=50_000)
    p.add_argument("--trace", action="store_true", help="record per-iteration losses")


def _config(args) -> SessionConfig:
    seed = args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            seed = int(env)
        except ValueError as exc:
            raise ValueError(f"{SEED_ENV} must be an integer, got {env!r}") from exc
    return SessionConfig(
        protocol=args.protocol,
        eps=args.eps,
        delta=args.delta,
        eps_min=args.eps_min,
        delta_min=args.delta_min,
        T=args.T,
        c=args.c,
        seed=seed,
        shards=args.shards,
        then_noninteractive=args.then_noninteractive,
        oracle=args.oracle,
        oracle_iters=args.oracle_iters,
        trace=args.trace,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpexplain", description="Differentially private local explanations.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explain", help="answer a file of queries")
    p.add_argument("--data", required=True, help="CSV with f1..fn,label")
    p.add_argument("--queries", required=True, help="CSV with f1..fn")
    p.add_argument("--out", required=True, help="JSONL results")
    p.add_argument("--history", help="results file to answer from (noninteractive protocol)")
    _session_flags(p)

    p = sub.add_parser("serve-adaptive", help="answer JSON queries from stdin, one per line")
    p.add_argument("--data", required=True)
    _session_flags(p)

    p = sub.add_parser("noninteractive", help="answer queries from earlier results only")
    p.add_argument("--history", required=True, help="JSONL results of an earlier session")
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--data", help="dataset for loss diagnostics (never used to answer)")
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--oracle-iters", type=int, default=50_000)

    p = sub.add_parser("gamma", help="training-data amplification factor")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--T", type=int, required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset and optional queries")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--m", type=int, default=10_000)
    p.add_argument("--clusters", type=int, default=5)
    p.add_argument("--cluster-std", type=float, default=0.1)
    p.add_argument("--center-scale", type=float, default=0.5)
    p.add_argument("--model", choices=("linear", "logistic_sign", "forest_stub"), default="linear")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--queries-out")
    p.add_argument("--stream", choices=("random", "dense_cluster", "sparse_cross_cluster", "clustered_within_d"), default="random")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--radius", type=float, default=0.0)

    p = sub.add_parser("plot", help="export two-column plot data")
    p.add_argument("--results", required=True)
    p.add_argument("--kind", choices=PLOT_KINDS, required=True)
    p.add_argument("--out", required=True)
    return parser


def _cmd_explain(args) -> int:
    return run_session(_config(args), args.data, args.queries, args.out, args.history)


def _cmd_noninteractive(args) -> int:
    cfg = SessionConfig(protocol="noninteractive", c=args.c, oracle=args.oracle, oracle_iters=args.oracle_iters)
    return run_session(cfg, args.data, args.queries, args.out, args.history)


def _cmd_serve(args, stdin, stdout) -> int:
    cfg = _config(args)
    if cfg.protocol == "noninteractive":
        raise ValueError("serve-adaptive needs an interactive protocol")
    runner = SessionRunner(cfg, load_dataset(args.data))
    n = runner.data.n
    for lineno, line in enumerate(stdin, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
            z = np.asarray(msg["query"] if isinstance(msg, dict) else msg, dtype=float).reshape(-1)
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"line {lineno}: {exc}") from exc
        if z.shape[0] != n or not np.all(np.isfinite(z)):
            raise DataError(f"line {lineno}: expected {n} finite coordinates")
        for rec in runner.submit(z):
            stdout.write(rec.to_json() + "\n")
        stdout.flush()
        if runner.finished:
            break
    return EXIT_EXHAUSTED if runner.exhausted_before_first else EXIT_OK


def cmd_gamma(m: int, eps: float, delta: float, T: int, out=None) -> int:
    rep = gamma_amplification(m, eps, delta, T)
    out = out or sys.stdout
    out.write(f"gamma {rep.gamma:.6g}\neps_train {rep.eps_train:.6g}\nu {rep.u:.6g}\n")
    return EXIT_OK


def _cmd_synth(args) -> int:
    spec = SyntheticSpec(args.n, args.m, args.clusters, args.cluster_std, args.model, args.seed, args.center_scale)
    data, model = gen_synthetic(spec)
    write_dataset(args.out, data)
    if args.queries_out:
        stream = QueryStream(args.stream, args.count, args.seed + 1, args.radius, args.clusters)
        write_queries(args.queries_out, gen_queries(stream, data, model.assignments))
    return EXIT_OK


def main(argv=None, stdin=None, stdout=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_CONFIG
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            if args.command == "explain":
                return _cmd_explain(args)
            if args.command == "serve-adaptive":
                return _cmd_serve(args, stdin or sys.stdin, stdout or sys.stdout)
            if args.command == "noninteractive":
                return _cmd_noninteractive(args)
            if args.command == "gamma":
                return cmd_gamma(args.m, args.eps, args.delta, args.T, stdout)
            if args.command == "synth":
                return _cmd_synth(args)
            return emit_plot_data(args.results, args.kind, args.out)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
