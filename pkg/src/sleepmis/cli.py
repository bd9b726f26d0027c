"""Command line: ``sleepmis {generate,run,sweep,verify,report}``.

Exit codes: 0 success, 1 an invariant breach (the offending record is
printed), 2 a usage error.  Output files default to ``$SLEEPMIS_OUT_DIR``
(or the working directory).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .config import PROFILES, Profile, get_profile
from .graph import GraphError, InfeasibleError, ParameterError, generate_graph, read_edgelist, write_edgelist

OUT_ENV = "SLEEPMIS_OUT_DIR"


class UsageError(Exception):
    pass


def out_path(name: str | None, default: str) -> Path:
    p = Path(name or default)
    if not p.is_absolute():
        p = Path(os.environ.get(OUT_ENV, ".")) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


# configuration ---------------------------------------------------------------

def _coerce(field: dataclasses.Field, text: str):
    kind = field.type if isinstance(field.type, type) else {"int": int, "float": float, "str": str}.get(field.type, str)
    try:
        return kind(text)
    except ValueError:
        raise UsageError(f"bad value for {field.name}: {text!r}") from None


def parse_overrides(pairs: list[str]) -> dict:
    """``key=value`` strings to typed :class:`Profile` overrides."""
    fields = {f.name: f for f in dataclasses.fields(Profile)}
    out = {}
    for item in pairs:
        if "=" not in item:
            raise UsageError(f"expected key=value, got {item!r}")
        k, v = (s.strip() for s in item.split("=", 1))
        if k not in fields or k == "name":
            raise UsageError(f"unknown config key {k!r}")
        out[k] = _coerce(fields[k], v)
    return out


def read_config_file(path: str) -> list[str]:
    lines = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    return lines


def profile_from_args(args) -> Profile:
    pairs = read_config_file(args.config) if args.config else []
    pairs += args.set or []
    return get_profile(args.profile, **parse_overrides(pairs))


# graphs ------------------------------------------------------------------------

def graph_params(args) -> dict:
    p = {"n": args.n}
    for key in ("p", "avg_degree", "d", "hubs", "hub_degree"):
        v = getattr(args, key, None)
        if v is not None:
            p[key] = v
    return p


def load_graph(args):
    if getattr(args, "graph", None):
        return read_edgelist(args.graph), {"file": args.graph}
    if args.n is None:
        raise UsageError("either --graph or --n is required")
    params = graph_params(args)
    return generate_graph(args.model, params, args.graph_seed), \
        {"model": args.model, "params": params, "seed": args.graph_seed}


def _add_graph_args(p, with_file=True):
    p.add_argument("--model", default="gnp",
                   choices=["gnp", "random_regular", "star", "path", "complete", "hubs"])
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--avg-deg", dest="avg_degree", type=float)
    p.add_argument("--d", type=int)
    p.add_argument("--hubs", type=int)
    p.add_argument("--hub-degree", dest="hub_degree", type=int)
    p.add_argument("--graph-seed", type=int, default=0)
    if with_file:
        p.add_argument("--graph", help="edge-list file instead of a generated graph")


def _add_profile_args(p):
    p.add_argument("--profile", default="desk", choices=sorted(PROFILES))
    p.add_argument("--config", help="file of key=value lines")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")


# subcommands -----------------------------------------------------------------

def cmd_generate(args) -> int:
    g, _ = load_graph(args)
    path = out_path(args.out, "graph.edgelist")
    write_edgelist(g, path)
    print(json.dumps({"n": g.n, "m": g.m, "max_degree": g.max_degree(), "path": str(path)}))
    return 0


def _check_record(rec) -> int:
    if not rec.independent or rec.violations or rec.unintended_drops:
        print(rec.to_json(), file=sys.stderr)
        return 1
    return 0


def cmd_run(args) -> int:
    from .harness import run_algorithm
    prof = profile_from_args(args)
    g, desc = load_graph(args)
    _, rec = run_algorithm(g, args.alg, prof, args.seed, args.avg_energy,
                           tuple(args.phase), desc)
    line = rec.to_json()
    if args.out:
        with open(out_path(args.out, "records.jsonl"), "a") as fh:
            fh.write(line + "\n")
    print(line)
    return _check_record(rec)


def cmd_sweep(args) -> int:
    from .harness import SweepSpec, run_sweep
    prof = profile_from_args(args)
    overrides = {k: v for k, v in dataclasses.asdict(prof).items()
                 if k != "name" and v != getattr(PROFILES[args.profile], k)}
    params = {k: v for k, v in graph_params(argparse.Namespace(**{**vars(args), "n": 0})).items()
              if k != "n"}
    spec = SweepSpec(ns=args.ns, model=args.model, params=params, seeds=args.seeds,
                     algs=args.alg, profile=args.profile, avg_energy=args.avg_energy,
                     overrides=overrides, same_graph=args.same_graph)
    path = out_path(args.out, "sweep.jsonl")
    status = 0
    with open(path, "a") as fh:
        def sink(rec):
            nonlocal status
            fh.write(rec.to_json() + "\n")
            fh.flush()
            if _check_record(rec):
                status = 1
        recs = run_sweep(spec, args.jobs, sink)
    print(json.dumps({"records": len(recs), "path": str(path)}))
    return status


def cmd_verify(args) -> int:
    if not (args.schedules or args.small_graphs):
        raise UsageError("verify needs --schedules and/or --small-graphs")
    ok = True
    if args.schedules:
        from .schedule import build_awake_sets, size_bound, verify_awake_sets
        bad = [T for T in range(1, args.max_t + 1)
               if not (verify_awake_sets(build_awake_sets(T))
                       and build_awake_sets(T).max_size() <= size_bound(T))]
        print(json.dumps({"check": "schedules", "max_t": args.max_t, "failed": bad[:20]}))
        ok &= not bad
    if args.small_graphs:
        from .verify import small_graph_suite
        res = small_graph_suite(max_n=args.max_n, seeds=args.seeds, algs=args.alg)
        print(json.dumps(res, sort_keys=True))
        ok &= res["ok"]
    return 0 if ok else 1


def cmd_report(args) -> int:
    from .records import read_records, report_csv
    recs = []
    for p in args.inputs:
        if not Path(p).exists():
            raise UsageError(f"no such file {p}")
        recs += read_records(p)
    text = report_csv(recs)
    if args.out:
        out_path(args.out, "report.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sleepmis", description="Low-energy MIS simulations.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("generate", help="write a generated graph as an edge list")
    _add_graph_args(p, with_file=False)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="one algorithm run; prints a JSON record")
    p.add_argument("--alg", choices=["1", "2"], default="1")
    p.add_argument("--avg-energy", action="store_true")
    p.add_argument("--phase", type=int, nargs="+", choices=[1, 2, 3], default=[1, 2, 3])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    _add_graph_args(p)
    _add_profile_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="runs over n values, algorithms and seeds")
    p.add_argument("--alg", choices=["1", "2"], nargs="+", default=["1"])
    p.add_argument("--ns", type=int, nargs="+", required=True)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--avg-energy", action="store_true")
    p.add_argument("--same-graph", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    _add_graph_args(p, with_file=False)
    _add_profile_args(p)
    p.set_defaults(func=cmd_sweep, n=None)

    p = sub.add_parser("verify", help="schedule and small-graph oracle suites")
    p.add_argument("--schedules", action="store_true")
    p.add_argument("--max-t", type=int, default=4096)
    p.add_argument("--small-graphs", action="store_true")
    p.add_argument("--max-n", type=int, default=5)
    p.add_argument("--seeds", type=int, default=2)
    p.add_argument("--alg", choices=["1", "2"], nargs="+", default=["1", "2"])
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="CSV summary of JSON-lines records")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ParameterError, InfeasibleError, GraphError, FileNotFoundError) as exc:
        print(f"sleepmis: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
