"""``qatsp`` command line: one subcommand per pipeline stage.

Every run writes its outputs atomically into ``--out`` (default ``$QATSP_OUT`` or
``./qatsp_out``) together with ``manifest.json``; ``qatsp --manifest FILE`` replays a run
and reproduces the same bytes. A JSON summary goes to stdout.

Exit status: 0 on success, 2 for bad arguments, 1 for runtime failures.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

from . import hybrid, oracle, stats, sweep
from .qubo_model import auto_scale, build_qubo, qubo_to_ising, qubo_type_name
from .tsp_instance import Instance, burma14, first_k, load_tsplib, parse_subset_spec, subset

OUT_ENV = "QATSP_OUT"
MANIFEST = "manifest.json"
# arguments that change where or how fast a run goes, not what it produces
_VOLATILE = ("out", "jobs", "manifest")


class UsageError(Exception):
    pass


def _tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------- argument types

def _positive(kind=float):
    def conv(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if not (v > 0 and math.isfinite(v)):
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return conv


def _qubo_type(text):
    try:
        return qubo_type_name(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _chimera_m(text):
    if text == "auto":
        return None
    return _positive(int)(text)


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_instance(p):
    p.add_argument("--instance", default="burma14",
                   help="TSPLIB .tsp path, or 'burma14' for the bundled file (default)")
    p.add_argument("--subset", default=None, help="node subset, e.g. '0..6' or '0,2,5' (0-based)")


def _add_model(p, chain=True):
    p.add_argument("--qubo", type=_qubo_type, default="reference", help="r|reference or h|heuristic")
    p.add_argument("-A", type=_positive(), default=1.0, help="constraint weight")
    p.add_argument("-B", type=_positive(), default=0.1, help="distance weight")
    if chain:
        p.add_argument("--chain-strength", type=_positive(), default=1.0)


def _add_solver(p):
    p.add_argument("--reads", type=_positive(int), default=200)
    p.add_argument("--sweeps", type=_positive(int), default=1000)
    p.add_argument("--chimera-m", type=_chimera_m, default=13,
                   help="Chimera size, or 'auto' for the smallest that fits")
    p.add_argument("--no-embed", action="store_true", help="sample the logical model directly")
    p.add_argument("--no-chain-moves", action="store_true",
                   help="single-spin updates only on the embedded model")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qatsp", description=__doc__.splitlines()[0])
    parser.add_argument("--manifest", type=Path, help="replay the run recorded in this manifest")
    parser.add_argument("--out", type=Path, default=None, help=f"output directory (default ${OUT_ENV})")
    parser.add_argument("--jobs", type=_positive(int), default=1, help="worker threads")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("build-qubo", help="write the QUBO and Ising models for one configuration")
    _add_instance(p)
    _add_model(p)

    p = sub.add_parser("oracle", help="exhaustive landscape summary of a small instance")
    _add_instance(p)
    _add_model(p, chain=False)
    p.add_argument("--energies", action="store_true", help="also write every tour state's energy")

    p = sub.add_parser("sample", help="embed, anneal and decode one configuration")
    _add_instance(p)
    _add_model(p)
    _add_solver(p)
    p.add_argument("--bins", type=_positive(int), default=30, help="energy histogram bins")
    p.add_argument("--svg", action="store_true", help="also render the histogram as SVG")

    p = sub.add_parser("sweep", help="run a parameter grid")
    _add_instance(p)
    p.add_argument("--grid", choices=["paper"], default="paper",
                   help="the 5 x 5 x 5 grid over A, B and chain strength")
    p.add_argument("--A-values", type=_float_list, default=None, help="override the A values")
    p.add_argument("--qubo", type=_qubo_type, action="append", default=None,
                   help="restrict to one QUBO type (repeatable)")
    _add_solver(p)

    p = sub.add_parser("hybrid", help="decompose, solve parts and merge")
    _add_instance(p)
    _add_model(p)
    _add_solver(p)
    p.add_argument("--max-size", type=int, default=hybrid.DEFAULT_MAX_SIZE)
    p.add_argument("--runs", type=_positive(int), default=1, help="runs with seeds seed..seed+runs-1")

    p = sub.add_parser("stats", help="compare two sets of tour lengths")
    p.add_argument("--r", help="comma-separated lengths or a hybrid summary JSON")
    p.add_argument("--h", help="comma-separated lengths or a hybrid summary JSON")
    p.add_argument("--name", default="instance")
    p.add_argument("--optimum", type=int, default=0)

    p = sub.add_parser("plot-data", help="landscape grids from a sweep result")
    p.add_argument("--sweep", type=Path, help="sweep.json written by 'sweep'")
    p.add_argument("--min-cs-real", type=float, default=None,
                   help="keep cells with cs_real above this value")
    p.add_argument("--bins", type=_positive(int), default=20)
    p.add_argument("--svg", action="store_true")
    return parser


# ---------------------------------------------------------------- helpers

def _load_instance(args) -> Instance:
    if args.instance == "burma14":
        base = burma14()
    else:
        path = Path(args.instance)
        if not path.is_file():
            raise UsageError(f"instance file not found: {path}")
        base = load_tsplib(path)
    if args.subset is None:
        return base
    try:
        nodes = parse_subset_spec(args.subset)
    except ValueError:
        raise UsageError(f"bad --subset {args.subset!r}") from None
    try:
        if nodes == list(range(len(nodes))):
            return first_k(base, len(nodes))
        return subset(base, nodes)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _solver_config(args) -> sweep.SolverConfig:
    return sweep.SolverConfig(num_reads=args.reads, sweeps=args.sweeps, seed=args.seed,
                              embed=not args.no_embed, chimera_m=args.chimera_m,
                              chain_moves=not args.no_chain_moves, jobs=args.jobs)


def _lengths(text: str) -> list[float]:
    path = Path(text)
    if path.is_file():
        data = json.loads(path.read_text())
        if isinstance(data, dict):
            data = data.get("lengths", data.get("length"))
        if isinstance(data, (int, float)):
            data = [data]
        if not isinstance(data, list):
            raise UsageError(f"{path} holds no list of lengths")
        return [float(v) for v in data]
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected lengths or a JSON file, got {text!r}") from None


class _Outputs:
    def __init__(self, root: Path):
        self.root = root
        self.files: list[str] = []

    def write(self, name: str, text: str) -> None:
        atomic_write(self.root / name, text)
        self.files.append(name)


# ---------------------------------------------------------------- commands

def cmd_build_qubo(args, out: _Outputs) -> dict:
    inst = _load_instance(args)
    q = build_qubo(args.qubo, inst.dist_norm, args.A, args.B)
    ising = qubo_to_ising(q)
    _, params = auto_scale(ising, args.chain_strength)
    out.write("qubo.json", q.to_json())
    out.write("ising.json", ising.to_json())
    return {"instance": inst.name, "n": inst.n, "num_vars": q.n_vars,
            "num_couplings": len(q.quadratic), "scale": params.scale}


def cmd_oracle(args, out: _Outputs) -> dict:
    inst = _load_instance(args)
    if inst.n > oracle.MAX_TOUR_ENUM_N:
        raise UsageError(f"oracle enumerates n! tours; n={inst.n} exceeds {oracle.MAX_TOUR_ENUM_N}")
    q = build_qubo(args.qubo, inst.dist_norm, args.A, args.B)
    summary = oracle.enumerate_tours(inst, q, jobs=args.jobs)
    if inst.n ** inst.n <= oracle.MAX_COLUMN_FUNCTIONS:
        summary.best_infeasible = oracle.enumerate_column_functions(inst, q, jobs=args.jobs)
    d = summary.to_dict()
    d["instance"] = inst.name
    out.write("oracle.json", json.dumps(d, indent=2))
    if args.energies:
        out.write("energies.csv", oracle.energy_rows_csv(inst, q))
    return {k: d[k] for k in ("instance", "n", "qubo_type", "n_feasible", "n_nonpenalized",
                              "n_penalized", "best_coef_5dp", "worst_coef_5dp", "optimal_length")}


def cmd_sample(args, out: _Outputs) -> dict:
    inst = _load_instance(args)
    cfg = _solver_config(args)
    opt = oracle.brute_optimum(inst, jobs=args.jobs).length
    cell = sweep.Cell(args.qubo, args.A, args.B, args.chain_strength)
    rec, res = sweep.run_cell(inst, cell, cfg, opt, keep=True)
    if res is None:
        raise RuntimeError(rec.error)
    out.write("samples.csv", res.samples.to_csv())
    out.write("record.json", json.dumps(asdict(rec), indent=2))
    hist = sweep.energy_histogram(res.samples, res.qubo.meta, args.bins)
    out.write("histogram.csv", hist.to_csv())
    if args.svg:
        out.write("histogram.svg", sweep.histogram_svg(hist, f"{inst.name} {args.qubo}"))
    return {"instance": inst.name, "optimum_length": opt, **{k: getattr(rec, k) for k in (
        "n_feasible", "n_optimum", "n_nonpenalized", "feasible_ratio", "mean_chain_break")}}


def cmd_sweep(args, out: _Outputs) -> dict:
    inst = _load_instance(args)
    A_values = args.A_values or list(sweep.DEFAULT_A_VALUES)
    try:
        grid = sweep.GridSpec(tuple(A_values), tuple(args.qubo or ("reference", "heuristic")),
                              args.reads, args.sweeps, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cfg = _solver_config(args)
    result = sweep.run_sweep(inst, grid.cells(), cfg, jobs=args.jobs)
    out.write("sweep.csv", result.to_csv())
    out.write("sweep.json", _sweep_json(result))
    return {"instance": inst.name, "cells": len(result.records),
            "failed": sum(not r.ok for r in result.records),
            **sweep.distinct_real_configs(result.records)}


def _sweep_json(result: sweep.SweepResult) -> str:
    d = result.to_dict()
    # the worker count never affects results
    d["config"].pop("jobs", None)
    return json.dumps(d, indent=2)


def cmd_hybrid(args, out: _Outputs) -> dict:
    inst = _load_instance(args)
    if args.max_size < 3:
        raise UsageError("--max-size must be >= 3")
    lengths, fallbacks = [], []
    for k in range(args.runs):
        cfg = _solver_config(args)
        cfg = sweep.SolverConfig(**{**asdict(cfg), "seed": args.seed + k})
        res = hybrid.solve_hybrid(inst, args.qubo, args.A, args.B, args.chain_strength, cfg,
                                  args.max_size, jobs=args.jobs)
        d = res.to_dict()
        d["config"].pop("jobs", None)
        out.write(f"hybrid_{args.qubo}_seed{cfg.seed}.json", json.dumps(d, indent=2))
        lengths.append(res.length)
        fallbacks.append(res.fallback_rate)
    mean, std = stats.aggregate(lengths)
    summary = {"instance": inst.name, "qubo_type": args.qubo, "seeds": list(range(args.seed, args.seed + args.runs)),
               "lengths": lengths, "mean": mean, "std": std,
               "mean_fallback_rate": sum(fallbacks) / len(fallbacks)}
    out.write(f"hybrid_{args.qubo}_summary.json", json.dumps(summary, indent=2))
    return summary


def cmd_stats(args, out: _Outputs) -> dict:
    if args.r is None or args.h is None:
        raise UsageError("stats needs both --r and --h")
    r, h = _lengths(args.r), _lengths(args.h)
    if len(r) < 3 or len(h) < 3:
        raise UsageError("each sample needs at least 3 lengths")
    row = stats.TableRow(args.name, args.optimum, tuple(r), tuple(h))
    c = row.compare()
    out.write("table.csv", stats.comparison_table_csv([row]))
    d = asdict(c)
    out.write("comparison.json", json.dumps(d, indent=2))
    return d


def cmd_plot_data(args, out: _Outputs) -> dict:
    if args.sweep is None or not Path(args.sweep).is_file():
        raise UsageError(f"sweep file not found: {args.sweep}")
    data = json.loads(Path(args.sweep).read_text())
    records = [sweep.RunRecord.from_dict(r) for r in data["records"]]
    where = None
    if args.min_cs_real is not None:
        thr = args.min_cs_real
        where = lambda r: r.cs_real is not None and r.cs_real > thr  # noqa: E731
    grids = {}
    for kind in sorted({r.qubo_type for r in records}):
        for metric in sweep.METRICS:
            g = sweep.landscape_grid([r for r in records if r.qubo_type == kind], metric, where, args.bins)
            name = f"landscape_{kind}_{metric}"
            out.write(name + ".csv", g.to_csv())
            if args.svg:
                out.write(name + ".svg", sweep.landscape_svg(g, f"{kind} {metric}"))
            grids[name] = "empty" if g.empty else list(g.values.shape)
    return {"grids": grids}


COMMANDS = {
    "build-qubo": cmd_build_qubo,
    "oracle": cmd_oracle,
    "sample": cmd_sample,
    "sweep": cmd_sweep,
    "hybrid": cmd_hybrid,
    "stats": cmd_stats,
    "plot-data": cmd_plot_data,
}


def _manifest(args) -> dict:
    params = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())
              if k not in _VOLATILE}
    return {"tool": "qatsp", "version": _tool_version(), "command": args.command, "args": params}


def _args_from_manifest(parser, path: Path, top) -> argparse.Namespace:
    try:
        m = json.loads(path.read_text())
        params = dict(m["args"])
        command = m["command"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"unreadable manifest {path}: {exc}") from None
    if command not in COMMANDS:
        raise UsageError(f"manifest names unknown command {command!r}")
    # start from the subcommand's defaults so older manifests stay replayable
    ns = parser.parse_args([command])
    for k, v in params.items():
        setattr(ns, k, v)
    ns.out, ns.jobs, ns.manifest = top.out, top.jobs, None
    return ns


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.manifest is not None:
            if args.command is not None:
                raise UsageError("--manifest replays a recorded run; do not also give a subcommand")
            args = _args_from_manifest(parser, args.manifest, args)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 2
        out_dir = args.out or Path(os.environ.get(OUT_ENV, "qatsp_out"))
        out = _Outputs(Path(out_dir))
        summary = COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"qatsp: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report any stage failure as a runtime error
        print(f"qatsp: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    out.write(MANIFEST, json.dumps(_manifest(args), indent=2, sort_keys=True) + "\n")
    print(json.dumps({"command": args.command, "out": str(out.root), "files": out.files,
                      "summary": summary}, default=_jsonable))
    return 0


def _jsonable(v):
    if hasattr(v, "tolist"):
        return v.tolist()
    raise TypeError(f"not JSON serializable: {type(v).__name__}")


if __name__ == "__main__":
    sys.exit(main())
