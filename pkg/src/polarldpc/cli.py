"""Command line entry point: construct, de, threshold, simulate, inspect.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 infeasible
ensemble or failed construction.  Every output file gets a sibling
``<name>.manifest.json`` recording the exact argument vector, the resolved
configuration and SHA-256 digests of the inputs, so the run can be repeated.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .codec import FormatError, layers_path_for, read_alist, write_alist, write_layers
from .construction import MODES, ConstructionError, construct
from .density import BracketError, Grid, find_threshold, polarized_de, standard_de
from .ensemble import (InfeasibleEnsembleError, build_layers, design_rate, ensemble_source_bytes,
                       load_ensemble, node_fractions)
from .graph import girth
from .simulate import SimConfig, parse_eps, run_sweep

log = logging.getLogger("polarldpc")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INFEASIBLE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# --------------------------------------------------------------------------
# manifests
# --------------------------------------------------------------------------

def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def manifest_path_for(output: str | Path) -> Path:
    p = Path(output)
    return p.with_name(p.stem + ".manifest.json")


def write_manifest(output: str | Path, subcommand: str, argv: Sequence[str], config: dict,
                   seed: int | None, inputs: dict[str, bytes], outputs: Sequence[str | Path]) -> Path:
    manifest = {
        "subcommand": subcommand,
        "argv": list(argv),
        "config": config,
        "seed": seed,
        "version": __version__,
        "inputs": {name: _sha256(data) for name, data in inputs.items()},
        "outputs": [str(o) for o in outputs],
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    path = manifest_path_for(output)
    path.write_bytes((json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode("ascii"))
    return path


def _config(args: argparse.Namespace) -> dict:
    out = {}
    for key, val in sorted(vars(args).items()):
        if key == "func":
            continue
        if isinstance(val, float) and math.isinf(val):
            val = "inf"
        out[key] = val
    return out


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def _grid(args) -> Grid:
    return Grid(args.step, args.limit)


def cmd_construct(args, argv) -> int:
    dd = load_ensemble(args.ensemble)
    g = construct(build_layers(dd), args.n, seed=args.seed, mode=args.mode)
    out = Path(args.out)
    sidecar = Path(args.layers) if args.layers else layers_path_for(out)
    write_alist(g, out)
    write_layers(g, sidecar)
    write_manifest(out, "construct", argv, _config(args), args.seed,
                   {"ensemble": ensemble_source_bytes(args.ensemble)}, [out, sidecar])
    print(f"n={g.n_var} m={g.n_check} edges={g.n_edges} rate={g.design_rate:.6f}")
    if g.shortfall:
        print(f"warning: {len(g.shortfall)} variable nodes below target degree", file=sys.stderr)
    return EXIT_OK


def _de_outputs(trace_path: Path, modes: list[str]) -> dict[str, Path]:
    if len(modes) == 1:
        return {modes[0]: trace_path}
    return {m: trace_path.with_name(f"{trace_path.stem}.{m}{trace_path.suffix or '.csv'}") for m in modes}


def cmd_de(args, argv) -> int:
    dd = load_ensemble(args.ensemble)
    modes = ["standard", "polarized"] if args.mode == "both" else [args.mode]
    grid = _grid(args)
    trace_path = Path(args.trace)
    outputs = _de_outputs(trace_path, modes)
    for mode in modes:
        if mode == "standard":
            trace = standard_de(dd, args.eps, args.iters, args.tau, grid)
        else:
            trace = polarized_de(build_layers(dd), args.eps, args.iters, args.tau, grid,
                                 freeze=not args.no_freeze)
        trace.to_csv(outputs[mode])
        status = "converged" if trace.converged else "not converged"
        print(f"{mode}: {status} after {trace.iterations} iterations, error {trace.final_error:.3e}")
    write_manifest(trace_path, "de", argv, _config(args), None,
                   {"ensemble": ensemble_source_bytes(args.ensemble)}, list(outputs.values()))
    return EXIT_OK


def cmd_threshold(args, argv) -> int:
    dd = load_ensemble(args.ensemble)
    modes = ["standard", "polarized"] if args.mode == "both" else [args.mode]
    result = {}
    for mode in modes:
        th = find_threshold(mode, dd, tol=args.tol, max_iter=args.iters, tau=args.tau,
                            grid=_grid(args), lo=args.lo, hi=args.hi)
        result[mode] = th
        print(f"{mode}: {th:.6f}")
    if args.out:
        Path(args.out).write_bytes((json.dumps(result, indent=2, sort_keys=True) + "\n").encode("ascii"))
        write_manifest(args.out, "threshold", argv, _config(args), None,
                       {"ensemble": ensemble_source_bytes(args.ensemble)}, [args.out])
    return EXIT_OK


def _load_graph(args):
    layers = args.layers
    if layers is None:
        guess = layers_path_for(args.graph)
        layers = guess if guess.is_file() else None
    g = read_alist(args.graph, layers)
    inputs = {"graph": Path(args.graph).read_bytes()}
    if layers is not None:
        inputs["layers"] = Path(layers).read_bytes()
    return g, inputs


def cmd_simulate(args, argv) -> int:
    g, inputs = _load_graph(args)
    try:
        eps = parse_eps(args.eps)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cfg = SimConfig(eps=tuple(eps), frames=args.frames, max_iter=args.max_iter,
                    schedule=args.schedule, tau_llr=args.tau_llr, seed=args.seed,
                    stop_after=args.stop_after or None, random_codeword=args.random_codeword)
    report = run_sweep(g, cfg, workers=args.workers)
    out = Path(args.out)
    out.write_bytes(report.to_csv().encode("ascii"))
    write_manifest(out, "simulate", argv, _config(args), args.seed, inputs, [out])
    for p in report.points:
        print(f"eps={p.eps:g} frames={p.frames} fer={p.fer:.3e} ber={p.ber:.3e} ({p.wall_time:.1f}s)")
    return EXIT_OK


def cmd_inspect(args, argv) -> int:
    g, _ = _load_graph(args)
    gi = girth(g)
    info = {
        "n": g.n_var,
        "m": g.n_check,
        "edges": g.n_edges,
        "rate": g.design_rate,
        "girth": None if math.isinf(gi) else gi,
        "var_degree_histogram": {int(d): int(c) for d, c in zip(*np.unique(g.var_degree, return_counts=True))},
        "check_degree_histogram": {int(d): int(c) for d, c in zip(*np.unique(g.check_degree, return_counts=True))},
        "layers": [],
    }
    for k in range(max(g.n_layers, 1)):
        vmask, cmask = g.var_layer == k, g.check_layer == k
        info["layers"].append({
            "layer": k,
            "variables": int(vmask.sum()),
            "checks": int(cmask.sum()),
            "var_degrees": sorted({int(d) for d in g.var_degree[vmask]}),
            "check_degrees": sorted({int(d) for d in g.check_degree[cmask]}),
        })
    if args.json:
        print(json.dumps(info, indent=2))
        return EXIT_OK
    print(f"n (variables): {info['n']}")
    print(f"m (checks):    {info['m']}")
    print(f"edges:         {info['edges']}")
    print(f"rate:          {info['rate']:.6f}")
    print(f"girth:         {'inf' if info['girth'] is None else info['girth']}")
    print("variable degrees: " + ", ".join(f"{d}:{c}" for d, c in info["var_degree_histogram"].items()))
    print("check degrees:    " + ", ".join(f"{d}:{c}" for d, c in info["check_degree_histogram"].items()))
    print("layer  variables  checks  var_degrees  check_degrees")
    for row in info["layers"]:
        print(f"{row['layer']:>5}  {row['variables']:>9}  {row['checks']:>6}  "
              f"{','.join(map(str, row['var_degrees'])) or '-':>11}  {','.join(map(str, row['check_degrees'])) or '-':>13}")
    return EXIT_OK


def cmd_ensemble(args, argv) -> int:
    """Print rate, node fractions and layering of an ensemble."""
    dd = load_ensemble(args.ensemble)
    var_frac, chk_frac = node_fractions(dd)
    print(f"design rate: {design_rate(dd):.6f}")
    print("variable node fractions: " + ", ".join(f"{d}:{f:.4f}" for d, f in var_frac.items()))
    print("check node fractions:    " + ", ".join(f"{d}:{f:.4f}" for d, f in chk_frac.items()))
    e = build_layers(dd)
    print("cross_rho (rows: variable degree, columns: check degree " + str(list(e.check_degrees)) + ")")
    for d, row in zip(e.var_degrees, e.cross_rho):
        print(f"  {d:>3}: " + "  ".join(f"{x:.4f}" for x in row))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _add_grid(p):
    p.add_argument("--step", type=float, default=0.01, help="LLR lattice step (default 0.01)")
    p.add_argument("--limit", type=float, default=30.0, help="LLR saturation limit (default 30)")
    p.add_argument("--tau", type=float, default=1e-9, help="convergence threshold on error probability")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="polarldpc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("construct", help="build a Tanner graph with PEG")
    p.add_argument("--ensemble", required=True, help="ensemble JSON file or bundled name")
    p.add_argument("--n", type=int, required=True, help="number of variable nodes")
    p.add_argument("--mode", choices=MODES, default="polarized")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="alist output path")
    p.add_argument("--layers", help="layer sidecar path (default: next to the alist)")
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("de", help="density evolution trace")
    p.add_argument("--ensemble", required=True)
    p.add_argument("--mode", choices=("standard", "polarized", "both"), default="polarized")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--trace", required=True, help="trace CSV path (suffixed per mode with --mode both)")
    p.add_argument("--no-freeze", action="store_true", help="keep updating converged classes")
    _add_grid(p)
    p.set_defaults(func=cmd_de)

    p = sub.add_parser("threshold", help="DE threshold by bisection")
    p.add_argument("--ensemble", required=True)
    p.add_argument("--mode", choices=("standard", "polarized", "both"), default="both")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--lo", type=float, default=1e-4)
    p.add_argument("--hi", type=float, default=0.5)
    p.add_argument("--out", help="JSON output path")
    _add_grid(p)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("simulate", help="BSC Monte-Carlo FER/BER sweep")
    p.add_argument("--graph", required=True)
    p.add_argument("--layers", help="layer sidecar (default: next to the alist, if present)")
    p.add_argument("--eps", required=True, help="'start:step:stop' or comma-separated list")
    p.add_argument("--frames", type=int, default=10000)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--schedule", choices=("plain", "layer_freeze"), default="plain")
    p.add_argument("--tau-llr", type=float, default=math.inf, help="layer freeze LLR level")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stop-after", type=int, default=100, help="frame errors per eps before stopping (0: never)")
    p.add_argument("--random-codeword", action="store_true", help="send encoded random messages")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", required=True, help="CSV output path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("inspect", help="summarize a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--layers")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("ensemble", help="summarize an ensemble spec")
    p.add_argument("--ensemble", required=True)
    p.set_defaults(func=cmd_ensemble)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"polarldpc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InfeasibleEnsembleError, ConstructionError) as exc:
        print(f"polarldpc: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (FormatError, FileNotFoundError, BracketError, ValueError, OSError) as exc:
        print(f"polarldpc: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
