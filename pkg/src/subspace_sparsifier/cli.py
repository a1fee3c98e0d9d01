"""Command-line interface.

Exit codes: 0 success, 2 validation failure, 3 parse error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import (CapExceededError, DisconnectedGraphError, EmptyOracleError, GraphError,
                     ParseError, SolverError, SparsifierError, SubsampleError)
from .graph import (format_certificate, format_graph, read_graph, read_pairs,
                    read_vertex_set)
from .resapx import res_apx
from .resistance import diff_apx
from .sketch import calibrate_c_local
from .sparsify import audit_distortion, make_basis, make_coordinate_subspace, subspace_sparsifier

EXIT_OK, EXIT_INVALID, EXIT_PARSE, EXIT_NUMERIC = 0, 2, 3, 4


def _jsonable(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    raise TypeError(f"cannot serialise {type(value).__name__}")


def _dump(record) -> str:
    return json.dumps(record, sort_keys=True, default=_jsonable)


def _config(args) -> RunConfig:
    return RunConfig(seed=args.seed, eps=args.eps, cterm=args.cterm, beta=args.beta,
                     c_local=args.clocal, gamma=args.gamma,
                     column_rounds=args.column_rounds, sketch_delta=args.sketch_delta,
                     dense_cap=args.dense_cap,
                     oracle=args.oracle, audit=args.audit,
                     exact_sc=getattr(args, "exact_sc", False)).validate()


def _log(msg):
    print(msg, file=sys.stderr)


def cmd_sparsify(args) -> int:
    cfg = _config(args)
    G = read_graph(args.graph)
    G.require_connected()
    if args.basis:
        try:
            vectors = np.loadtxt(args.basis, ndmin=2)
        except (OSError, ValueError) as exc:
            raise ParseError(str(exc), args.basis) from None
        basis = make_basis(G, vectors)
    elif args.terminals:
        basis = make_coordinate_subspace(G, read_vertex_set(args.terminals))
    else:
        raise GraphError("give a terminals file or --basis")
    result = subspace_sparsifier(G, basis, cfg.eps, cfg.oracle_spec(), cfg.seed,
                                 cterm=cfg.cterm, audit=True if cfg.audit else None,
                                 dense_cap=cfg.dense_cap)
    H = result.graph
    if not result.certificate.verify(H):
        raise SolverError("certificate replay does not reproduce the output")
    prefix = Path(args.output)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{prefix}.graph").write_text(format_graph(H))
    Path(f"{prefix}.cert").write_text(format_certificate(H))
    lines = [_dump({"config": cfg.as_dict(), "d": basis.d, "threshold": result.threshold,
                    "n": G.n, "m": G.m})]
    lines += [_dump(rec) for rec in result.trace]
    final = {"final": True, "n": H.n, "m": H.m, "iterations": result.iterations}
    if cfg.audit:
        if max(G.n, H.n) <= cfg.dense_cap:
            dist = audit_distortion(G, H, basis, cfg.dense_cap)
            final.update(distortion=dist, within_eps=bool(dist <= cfg.eps),
                         step_violation_rate=result.audit.violation_rate())
        else:
            final.update(distortion=None, audit_skipped="graph exceeds dense cap")
    lines.append(_dump(final))
    Path(f"{prefix}.trace.jsonl").write_text("\n".join(lines) + "\n")
    _log(f"sparsified n={G.n} m={G.m} -> n={H.n} m={H.m} in {result.iterations} iterations"
         f" (threshold {result.threshold:.1f})")
    if cfg.audit and final.get("distortion") is not None and not final["within_eps"]:
        _log(f"audit: distortion {final['distortion']:.4f} exceeds eps {cfg.eps}")
    return EXIT_OK


def cmd_resapx(args) -> int:
    cfg = _config(args)
    G = read_graph(args.graph)
    pairs = read_pairs(args.pairs)
    mode = "identity" if args.identity else ("exact-sc" if cfg.exact_sc else "sparsify")
    if pairs:
        G.require_connected()
        result = res_apx(G, pairs, cfg.eps, cfg.seed, cfg.oracle_spec(), cterm=cfg.cterm,
                         mode=mode, dense_cap=cfg.dense_cap)
        body = "".join(f"{u} {v} {result[(u, v)]!r}\n" for u, v in pairs)
    else:
        body = ""
    Path(args.output).write_text(body)
    _log(f"answered {len(pairs)} pair queries ({mode})")
    return EXIT_OK


def cmd_diffapx(args) -> int:
    cfg = _config(args)
    G = read_graph(args.graph)
    S = read_vertex_set(args.terminals)
    est = diff_apx(G, S, args.delta0, args.delta1, cfg.seed)
    body = "".join(f"{int(e)} {float(v)!r}\n" for e, v in zip(est.edge_ids, est.values))
    Path(args.output).write_text(body)
    _log(f"k = {est.params['k']} sketch rows; symbolic solver accuracy "
         f"{est.params['solver_eps_symbolic']:.3e}, clamped: {est.params['solver_clamped']}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .spanning_tree import ENUM_MAX_M, ENUM_MAX_N, tree_inclusion_fractions
    from .testkit import DenseOracle, verify_identities

    G = read_graph(args.graph)
    if not G.is_connected:
        _log("verify: the input graph is disconnected; every spectral identity needs a connected graph")
        return EXIT_INVALID
    if G.n > args.dense_cap:
        raise CapExceededError(f"n = {G.n} exceeds dense cap {args.dense_cap}")
    if args.terminals:
        S = read_vertex_set(args.terminals)
    else:
        rng = np.random.default_rng(args.seed)
        S = sorted(rng.choice(G.n, size=min(G.n, 5), replace=False).tolist())
    report = verify_identities(G, S, tol=args.tol, seed=args.seed, cap=args.dense_cap)
    if G.n <= ENUM_MAX_N and G.m <= ENUM_MAX_M:
        gap = np.abs(tree_inclusion_fractions(G) - DenseOracle(G).leverage()).max(initial=0.0)
        report.add("kirchhoff", gap)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.passed else EXIT_INVALID


def _corpus_files(directory):
    d = Path(directory)
    if not d.is_dir():
        raise GraphError(f"{d} is not a directory")
    return sorted(p for p in d.iterdir() if p.is_file() and not p.name.startswith("."))


def cmd_calibrate(args) -> int:
    files = _corpus_files(args.corpus)
    graphs = [read_graph(p) for p in files]
    fit = calibrate_c_local(graphs, quantile=args.quantile, cap=args.dense_cap)
    text = f"c_local {fit['c_local']!r}\ngraphs {fit['graphs']}\n"
    if args.output:
        Path(args.output).write_text(text)
    print(text, end="")
    return EXIT_OK


def _common(p, eps=0.5):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=eps)
    p.add_argument("--oracle", choices=("slow", "fast"), default="slow")
    p.add_argument("--cterm", type=float, default=10.0, help="termination constant")
    p.add_argument("--beta", type=float, default=1.0, help="batch-size divisor for the fast oracle")
    p.add_argument("--clocal", type=float, default=1.0, help="localization constant")
    p.add_argument("--gamma", type=float, default=None,
                   help="override the fast oracle's subsampling rate")
    p.add_argument("--column-rounds", type=int, default=None,
                   help="column-sum estimation rounds (default ceil(25 ln n))")
    p.add_argument("--sketch-delta", type=float, default=None,
                   help="l1 sketch failure probability (default n^-6)")
    p.add_argument("--dense-cap", type=int, default=500)
    p.add_argument("--audit", action="store_true", help="dense distortion audit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subspace-sparsifier",
                                     description="Spectral subspace sparsifiers and resistance queries.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sparsify", help="sparsify onto a terminal set or demand basis")
    p.add_argument("graph")
    p.add_argument("terminals", nargs="?")
    p.add_argument("--basis", help="text matrix with one row per vertex, one column per demand")
    p.add_argument("-o", "--output", required=True, help="output prefix")
    _common(p)
    p.set_defaults(func=cmd_sparsify)

    p = sub.add_parser("resapx", help="batch effective resistances")
    p.add_argument("graph")
    p.add_argument("pairs")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--exact-sc", action="store_true", help="use dense Schur complements")
    p.add_argument("--identity", action="store_true", help="no reduction: exact answers")
    _common(p, eps=0.2)
    p.set_defaults(func=cmd_resapx)

    p = sub.add_parser("diffapx", help="estimate per-edge leverage drop from identifying terminals")
    p.add_argument("graph")
    p.add_argument("terminals")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--delta0", type=float, default=0.25)
    p.add_argument("--delta1", type=float, default=1e-5)
    _common(p)
    p.set_defaults(func=cmd_diffapx)

    p = sub.add_parser("verify", help="check the dense identity suite on a graph")
    p.add_argument("graph")
    p.add_argument("--terminals")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--dense-cap", type=int, default=500)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("calibrate", help="fit the localization constant on a corpus directory")
    p.add_argument("corpus")
    p.add_argument("-o", "--output")
    p.add_argument("--quantile", type=float, default=90.0)
    p.add_argument("--dense-cap", type=int, default=500)
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        _log(f"parse error: {exc}")
        return EXIT_PARSE
    except DisconnectedGraphError as exc:
        _log(f"invalid input: {exc}")
        return EXIT_INVALID
    except (SolverError, SubsampleError, EmptyOracleError) as exc:
        _log(f"numerical failure: {exc}")
        return EXIT_NUMERIC
    except (GraphError, CapExceededError, SparsifierError, ValueError) as exc:
        _log(f"invalid input: {exc}")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
