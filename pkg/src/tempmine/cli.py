"""Operator surface: ingest, mine, verify, synthesize, benchmark.

Exit codes: 0 success, 1 runtime error, 2 usage or validation error. Every
mine run writes a JSON manifest next to its output for reproducibility.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import cache, dsl, oracle, synth
from .engine import mine
from .plan import BUILTIN_COLUMNS, compile_pattern, dump_plan
from .txgraph import ColumnMapping, build_graph, parse_transactions
from . import plan as planmod

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_RUNTIME):
        super().__init__(message)
        self.code = code


def _load_graph(args) -> "cache.TemporalGraph":
    if getattr(args, "cache", None) and os.path.exists(args.cache) and not getattr(args, "input", None):
        return cache.load_graph(args.cache)
    if getattr(args, "input", None):
        records = parse_transactions(args.input, _mapping(args))
        return build_graph(records)
    if getattr(args, "cache", None):
        raise CliError(f"cache file {args.cache!r} does not exist", EXIT_USAGE)
    raise CliError("need --cache or --input", EXIT_USAGE)


def _mapping(args) -> ColumnMapping:
    if getattr(args, "single_account_column", False):
        return ColumnMapping(src_bank=None, dst_bank=None)
    return ColumnMapping()


def _resolve_pattern_sources(names: list[str]) -> list[tuple[str, str]]:
    """Expand --pattern values into (label, document text) pairs."""
    out = []
    for name in names:
        if name == "builtin:all":
            for builtin in BUILTIN_COLUMNS:
                out.append((f"builtin:{builtin}", planmod.builtin_pattern_text(builtin)))
        elif name.startswith("builtin:"):
            builtin = name.split(":", 1)[1]
            if builtin not in BUILTIN_COLUMNS:
                raise CliError(f"unknown builtin pattern {builtin!r}", EXIT_USAGE)
            out.append((name, planmod.builtin_pattern_text(builtin)))
        elif name in BUILTIN_COLUMNS and not os.path.exists(name):
            out.append((f"builtin:{name}", planmod.builtin_pattern_text(name)))
        else:
            if not os.path.exists(name):
                raise CliError(f"pattern file {name!r} not found", EXIT_USAGE)
            with open(name, "r", encoding="utf-8") as fh:
                out.append((name, fh.read()))
    return out


def _parse_deltas(values: list[str]) -> dict[str, int]:
    overrides = {}
    for item in values:
        name, sep, value = item.partition("=")
        if not sep:
            raise CliError(f"--delta expects NAME=VALUE, got {item!r}", EXIT_USAGE)
        try:
            overrides[name] = int(value)
        except ValueError:
            raise CliError(f"--delta {item!r}: value must be an integer tick count", EXIT_USAGE)
    return overrides


def _load_patterns(args) -> list[dsl.ValidatedPattern]:
    sources = _resolve_pattern_sources(args.pattern or ["builtin:all"])
    overrides = _parse_deltas(args.delta or [])
    attribution = getattr(args, "attribution", None)
    patterns = []
    for label, text in sources:
        try:
            spec = dsl.parse_pattern(text)
        except dsl.PatternParseError as exc:
            _print_diagnostics(label, exc.diagnostics)
            raise CliError(f"pattern {label} failed to parse", EXIT_USAGE)
        delta = overrides.get(spec.name, overrides.get("all"))
        if delta is not None:
            spec = dataclasses.replace(spec, delta=delta)
        if attribution:
            spec = dataclasses.replace(spec, attribution=attribution)
        result = dsl.validate(spec)
        if isinstance(result, list):
            _print_diagnostics(label, result)
            raise CliError(f"pattern {label} failed validation", EXIT_USAGE)
        patterns.append(result)
    return patterns


def _print_diagnostics(label: str, diagnostics) -> None:
    for diag in diagnostics:
        where = f"{label}:{diag.line or 0}:{diag.col or 0}"
        stage = f" (stage {diag.stage})" if diag.stage is not None else ""
        print(f"{where}: {diag.message}{stage}", file=sys.stderr)


def _workers(args) -> int:
    if args.workers is not None:
        return args.workers
    env = os.environ.get("TEMPMINE_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise CliError(f"TEMPMINE_WORKERS={env!r} is not an integer", EXIT_USAGE)
    return 1


def _write_manifest(path: str, payload: dict) -> None:
    payload = dict(payload)
    payload["written_at"] = datetime.now(timezone.utc).isoformat()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_ingest(args) -> int:
    records = parse_transactions(args.input, _mapping(args))
    graph = build_graph(records)
    cache.save_graph(graph, args.cache)
    print(f"{graph.node_count:,} nodes / {graph.edge_count:,} edges")
    print(f"cache written to {args.cache}")
    return EXIT_OK


def cmd_mine(args) -> int:
    patterns = _load_patterns(args)
    graph = _load_graph(args)
    plans = [compile_pattern(p, graph.stats, force_generic=args.force_generic)
             for p in patterns]
    if args.dump_plan:
        for p in plans:
            sys.stdout.write(dump_plan(p))
            sys.stdout.write("\n")
        if not args.out:
            return EXIT_OK
    if not args.out:
        raise CliError("--out is required to mine", EXIT_USAGE)
    workers = _workers(args)
    started = time.perf_counter()
    if args.instances:
        matrix, found = mine(graph, plans, workers=workers, collect_instances=True)
        with open(args.instances, "w", encoding="utf-8", newline="\n") as fh:
            for inst in found:
                fh.write(json.dumps(inst.to_json_dict(), separators=(",", ":")) + "\n")
    else:
        matrix = mine(graph, plans, workers=workers)
    wall = time.perf_counter() - started
    matrix.to_csv(args.out)
    throughput = graph.edge_count / wall if wall > 0 else float("inf")
    _write_manifest(args.out + ".manifest.json", {
        "command": "mine",
        "input": args.input,
        "cache": args.cache,
        "patterns": [{"name": p.name, "delta": p.delta, "attribution": p.attribution,
                      "kernel_hint": p.kernel_hint} for p in plans],
        "workers": workers,
        "out": args.out,
        "instances_out": args.instances,
        "force_generic": args.force_generic,
        "edge_count": graph.edge_count,
        "node_count": graph.node_count,
        "wall_seconds": round(wall, 3),
        "edges_per_sec": round(throughput, 1),
    })
    print(f"mined {graph.edge_count:,} edges x {len(plans)} patterns "
          f"in {wall:.2f}s ({throughput:,.0f} edges/sec, {workers} worker(s))")
    return EXIT_OK


def cmd_verify(args) -> int:
    graph = _load_graph(args)
    if graph.node_count > oracle.MAX_ORACLE_NODES and not args.force:
        print(f"refusing: graph has {graph.node_count} nodes, oracle guard is "
              f"{oracle.MAX_ORACLE_NODES} (use --force to override)", file=sys.stderr)
        return EXIT_USAGE
    patterns = _load_patterns(args)
    modes = ["trigger", "members"] if args.attribution is None else [args.attribution]
    failures = 0
    for pattern in patterns:
        for mode in modes:
            spec = dataclasses.replace(pattern.spec, attribution=mode)
            vp = dsl.must_validate(spec)
            plan_obj = compile_pattern(vp, graph.stats)
            matrix = mine(graph, [plan_obj])
            expected = oracle.enumerate_bruteforce(graph, vp, attribution=mode,
                                                   force=args.force)
            report = oracle.compare(f"{pattern.name}[{mode}]", expected,
                                    matrix.column(pattern.name))
            print(report.render())
            if not report.ok:
                failures += 1
    return EXIT_OK if failures == 0 else EXIT_RUNTIME


def cmd_synth(args) -> int:
    plants = []
    fanout = tuple(int(x) for x in args.fanout.split(":"))
    if len(fanout) != 2:
        raise CliError("--fanout expects LO:HI", EXIT_USAGE)
    for item in args.plant or []:
        kind, sep, count = item.partition("=")
        if not sep:
            raise CliError(f"--plant expects KIND=COUNT, got {item!r}", EXIT_USAGE)
        plants.append(synth.PlantSpec(kind=kind, count=int(count),
                                      fanout=fanout, span=args.span))
    config = synth.SynthConfig(
        node_count=args.nodes,
        background_edge_count=args.edges,
        time_horizon=args.horizon,
        seed=args.seed,
        plants=tuple(plants),
        label_planted=not args.no_labels,
    )
    records, instances = synth.generate(config)
    synth.write_csv(records, args.out)
    if args.truth:
        synth.write_truth(instances, args.truth)
    _write_manifest(args.out + ".manifest.json", {
        "command": "synth",
        "out": args.out,
        "truth": args.truth,
        "seed": args.seed,
        "node_count": args.nodes,
        "background_edge_count": args.edges,
        "time_horizon": args.horizon,
        "plants": args.plant or [],
        "fanout": args.fanout,
        "span": args.span,
        "labeled": not args.no_labels,
        "edge_count": len(records),
        "planted_instances": len(instances),
    })
    print(f"wrote {len(records):,} edges ({len(instances)} planted instances) to {args.out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    graph = _load_graph(args)
    patterns = _load_patterns(args)
    plans = [compile_pattern(p, graph.stats) for p in patterns]
    sweep = [int(x) for x in args.workers_sweep.split(",")]
    rows = []
    base = None
    for workers in sweep:
        started = time.perf_counter()
        mine(graph, plans, workers=workers)
        wall = time.perf_counter() - started
        eps = graph.edge_count / wall if wall > 0 else float("inf")
        if base is None:
            base = eps
        rows.append((workers, wall, eps, eps / base))
    print(f"{'workers':>8} {'seconds':>10} {'edges/sec':>14} {'speedup':>8}")
    for workers, wall, eps, speedup in rows:
        print(f"{workers:>8} {wall:>10.2f} {eps:>14,.0f} {speedup:>8.2f}")
    if args.table_out:
        with open(args.table_out, "w", encoding="utf-8") as fh:
            fh.write("workers,seconds,edges_per_sec,speedup\n")
            for workers, wall, eps, speedup in rows:
                fh.write(f"{workers},{wall:.3f},{eps:.1f},{speedup:.3f}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tempmine",
        description="Temporal transaction-graph pattern mining",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common_io(p, need_patterns=True):
        p.add_argument("--input", help="transaction CSV to ingest")
        p.add_argument("--cache", help="binary graph cache path")
        p.add_argument("--single-account-column", action="store_true",
                       help="input has no bank columns")
        if need_patterns:
            p.add_argument("--pattern", action="append",
                           help="pattern file, builtin:NAME, or builtin:all (repeatable)")
            p.add_argument("--delta", action="append",
                           help="NAME=VALUE window override (NAME=all applies everywhere)")
            p.add_argument("--attribution", choices=["trigger", "members"],
                           help="override attribution for all patterns")

    p_ingest = sub.add_parser("ingest", help="parse a CSV and write the binary cache")
    p_ingest.add_argument("--input", required=True)
    p_ingest.add_argument("--cache", required=True)
    p_ingest.add_argument("--single-account-column", action="store_true")
    p_ingest.set_defaults(fn=cmd_ingest)

    p_mine = sub.add_parser("mine", help="mine features and export CSV")
    add_common_io(p_mine)
    p_mine.add_argument("--out", help="feature CSV output path")
    p_mine.add_argument("--instances", help="also write matched instances (JSONL)")
    p_mine.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: TEMPMINE_WORKERS or 1)")
    p_mine.add_argument("--force-generic", action="store_true",
                        help="disable kernel hints (differential testing)")
    p_mine.add_argument("--dump-plan", action="store_true",
                        help="print compiled plan dumps (exits early without --out)")
    p_mine.set_defaults(fn=cmd_mine)

    p_verify = sub.add_parser("verify", help="engine vs brute-force oracle")
    add_common_io(p_verify)
    p_verify.add_argument("--force", action="store_true",
                          help="override the oracle size guard")
    p_verify.set_defaults(fn=cmd_verify, attribution=None)

    p_synth = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p_synth.add_argument("--nodes", type=int, required=True)
    p_synth.add_argument("--edges", type=int, required=True)
    p_synth.add_argument("--horizon", type=int, required=True)
    p_synth.add_argument("--seed", type=int, default=7)
    p_synth.add_argument("--plant", action="append", help="KIND=COUNT (repeatable)")
    p_synth.add_argument("--fanout", default="3:8", help="LO:HI intermediate range")
    p_synth.add_argument("--span", type=int, default=3600,
                         help="max member time spread per planted instance")
    p_synth.add_argument("--no-labels", action="store_true")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--truth", help="ground-truth JSONL path")
    p_synth.set_defaults(fn=cmd_synth)

    p_bench = sub.add_parser("bench", help="worker sweep throughput table")
    add_common_io(p_bench)
    p_bench.add_argument("--workers-sweep", default="1,2,4,8")
    p_bench.add_argument("--table-out", help="write the table as CSV")
    p_bench.set_defaults(fn=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (dsl.PatternParseError, dsl.PatternValidationError) as exc:
        for diag in exc.diagnostics:
            print(str(diag), file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
