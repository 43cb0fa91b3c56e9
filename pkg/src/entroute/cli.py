"""Command-line experiment runner.

Subcommands: run (single config), sweep (experiment spec), validate-config,
describe. Exit codes: 0 success, 1 config error, 2 runtime fault.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace

from . import dodag, engine, experiments, metrics, topology
from .engine import SimConfig


def _apply_overrides(cfg: SimConfig, args) -> SimConfig:
    fields = {}
    if args.strategy:
        fields["strategy"] = args.strategy
    if args.topology:
        fields["topology"] = _parse_topology(args.topology)
    if args.n_requests is not None:
        fields["n_requests"] = args.n_requests
    if args.t_co is not None:
        fields["coherence_time"] = math.inf if args.t_co == "inf" else float(args.t_co)
    if args.seed is not None:
        fields["seed"] = args.seed
    if args.duration is not None:
        fields["duration"] = args.duration
    if args.core:
        fields["core"] = args.core
    if getattr(args, "event_log", None):
        fields["event_log"] = True
    if getattr(args, "debug_checks", False):
        fields["debug_checks"] = True
    return replace(cfg, **fields)


def _parse_topology(text: str) -> engine.TopologySpec:
    """grid:RxC or random:N:DEG, e.g. grid:10x10, random:100:4."""
    kind, _, rest = text.partition(":")
    if kind == "grid":
        rows, _, cols = rest.partition("x")
        return engine.TopologySpec(kind="grid", rows=int(rows), cols=int(cols))
    if kind == "random":
        n, _, deg = rest.partition(":")
        return engine.TopologySpec(kind="random", n=int(n), avg_degree=float(deg or 4.0))
    raise ValueError(f"cannot parse topology {text!r} (grid:RxC or random:N:DEG)")


def _load_config(args) -> SimConfig:
    cfg = experiments.load_config_file(args.config) if args.config else SimConfig()
    return _apply_overrides(cfg, args)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--strategy", help="radar-q | synch-nca | asynch-root")
    parser.add_argument("--topology", help="grid:RxC or random:N:DEG")
    parser.add_argument("--n-requests", type=int, dest="n_requests")
    parser.add_argument("--t-co", dest="t_co", help="coherence time in seconds, or 'inf'")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--duration", type=float, help="measured seconds per run")
    parser.add_argument("--core", choices=("auto", "python", "compiled"))


def cmd_run(args) -> int:
    cfg = _load_config(args)
    problems = cfg.validate()
    if problems:
        for p in problems:
            print(f"config error: {p}", file=sys.stderr)
        return 1
    record, core = engine.simulate(cfg)
    if args.csv:
        new_file = not _file_has_content(args.csv)
        with open(args.csv, "a") as fh:
            if new_file:
                fh.write(metrics.CSV_HEADER + "\n")
            fh.write(metrics.csv_row(record) + "\n")
    if args.event_log_out and core.event_log is not None:
        with open(args.event_log_out, "w") as fh:
            for entry in core.event_log:
                fh.write(json.dumps(entry) + "\n")
    fid = "n/a" if record.mean_fidelity is None else f"{record.mean_fidelity:.4f}"
    jain = "n/a" if record.jain_index is None else f"{record.jain_index:.4f}"
    print(
        f"{cfg.strategy} on {cfg.topology.kind} N={cfg.n_requests} seed={cfg.seed}: "
        f"throughput={record.aggregate_throughput:.6g} pairs/s fidelity={fid} "
        f"jain={jain} delivered={record.delivered_count} events={record.events}"
    )
    return 0


def _file_has_content(path: str) -> bool:
    try:
        with open(path) as fh:
            return bool(fh.readline())
    except FileNotFoundError:
        return False


def cmd_sweep(args) -> int:
    try:
        spec = experiments.ExperimentSpec.load(args.spec)
    except (OSError, KeyError, ValueError) as exc:
        print(f"cannot load experiment spec: {exc}", file=sys.stderr)
        return 1
    problems = spec.validate()
    if problems:
        for p in problems:
            print(f"spec error: {p}", file=sys.stderr)
        return 1
    out = args.out or spec.output
    if not out:
        print("no output path (use --out or spec 'output')", file=sys.stderr)
        return 1

    def progress(done, total):
        if args.verbose:
            print(f"\r{done}/{total} cells", end="", file=sys.stderr, flush=True)

    rows = experiments.run_experiment(spec, jobs=args.jobs, progress=progress)
    if args.verbose:
        print(file=sys.stderr)
    try:
        experiments.write_csv(rows, out)
    except OSError as exc:
        print(f"cannot write {out}: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def cmd_validate_config(args) -> int:
    try:
        cfg = _load_config(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"cannot load config: {exc}", file=sys.stderr)
        return 1
    problems = cfg.validate()
    if problems:
        for p in problems:
            print(f"invalid: {p}")
        return 1
    print("config ok")
    return 0


def cmd_describe(args) -> int:
    try:
        cfg = _load_config(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"cannot load config: {exc}", file=sys.stderr)
        return 1
    problems = cfg.validate()
    if problems:
        for p in problems:
            print(f"invalid: {p}", file=sys.stderr)
        return 1
    resolved = {
        "strategy": cfg.strategy,
        "topology": cfg.topology.to_dict(),
        "gen_prob": cfg.gen_prob,
        "bsm_prob": cfg.bsm_prob,
        "init_fidelity": cfg.init_fidelity,
        "coherence_time": "inf" if math.isinf(cfg.coherence_time) else cfg.coherence_time,
        "decay_scale": cfg.decay_scale,
        "alpha": cfg.alpha,
        "beta": cfg.beta,
        "memory": cfg.memory,
        "n_requests": cfg.n_requests,
        "attempt_period": cfg.attempt_period,
        "hop_latency": cfg.hop_latency,
        "duration": cfg.duration,
        "warmup": cfg.warmup,
        "request_interval": cfg.request_interval,
        "retry_cap": cfg.retry_cap,
        "synch_gen_attempts": cfg.synch_gen_attempts,
        "seed": cfg.seed,
        "core": engine.active_core(cfg),
    }
    print(json.dumps(resolved, indent=2))
    graph = engine.build_topology(cfg)
    root = cfg.root if cfg.root is not None else topology.pick_center_root(graph)
    print(f"# nodes={graph.n_nodes} links={graph.n_links} "
          f"diameter={topology.graph_diameter(graph)} root={root}")
    if args.dodag:
        states = dodag.converge_dodag(graph, root, cfg.alpha, cfg.beta)
        sys.stdout.write(dodag.dump_states(states))
    if args.dump_graph:
        sys.stdout.write(graph.to_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entroute",
        description="Entanglement-routing simulator: contention-aware asynchronous "
                    "routing vs synchronous and root-anchored baselines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a single simulation")
    _add_common(p_run)
    p_run.add_argument("--csv", help="append the result row to this CSV")
    p_run.add_argument("--event-log", action="store_true", dest="event_log",
                       help="record the event log")
    p_run.add_argument("--event-log-out", help="write the event log (JSONL) here")
    p_run.add_argument("--debug-checks", action="store_true",
                       help="assert memory-conservation invariants per event")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run an experiment spec")
    p_sweep.add_argument("spec", help="JSON experiment spec")
    p_sweep.add_argument("--out", help="output CSV path (overrides spec)")
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p_sweep.add_argument("--verbose", action="store_true")
    p_sweep.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser("validate-config", help="check a config without running")
    _add_common(p_val)
    p_val.set_defaults(func=cmd_validate_config)

    p_desc = sub.add_parser("describe", help="print the resolved configuration")
    _add_common(p_desc)
    p_desc.add_argument("--dodag", action="store_true",
                        help="also dump the converged DODAG (node, rank, parent, d_hop)")
    p_desc.add_argument("--dump-graph", action="store_true",
                        help="also dump the topology snapshot (JSON)")
    p_desc.set_defaults(func=cmd_describe)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime fault
        print(f"runtime fault: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
