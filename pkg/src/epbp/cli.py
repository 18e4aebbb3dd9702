"""Command-line entry point: ``epbp <command> [options]``.

Exit status is 0 on success, 1 if any benchmark cell or inference run
failed, and 2 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from .bench import (
    CSV_HEADER,
    METHODS,
    CsvSink,
    ExperimentConfig,
    add_noise,
    build_mesh,
    build_mrf,
    denoise,
    format_row,
    load_config,
    make_estimator,
    run_accuracy_bench,
    run_iteration_trace,
    synthetic_image,
    write_meta,
)
from .exceptions import EPBPError, InvalidInputError
from .imageio import encode_pgm, read_pgm, write_pgm
from .mesh import l1_error, run_mesh_lbp, write_beliefs_csv

SINGLE_RUN = {"epbp": "epbp", "pbp": "pbp", "ep": "ep", "pbp-after-ep": "pbp-after-ep"}


def _common(parser: argparse.ArgumentParser, many_n: bool) -> None:
    parser.add_argument("--config", metavar="PATH", help="YAML experiment config")
    parser.add_argument("--seed", type=int, metavar="S", help="master seed")
    parser.add_argument("--iterations", type=int, metavar="K", help="BP sweeps")
    parser.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    parser.add_argument("--mesh-points", type=int, metavar="K", help="mesh size (default 200)")
    parser.add_argument("--mesh-range", type=float, nargs=2, metavar=("LO", "HI"))
    parser.add_argument("--subquad", type=int, metavar="M",
                        help="sub-quadratic component count")
    if many_n:
        parser.add_argument("--particles", type=int, nargs="+", metavar="N")
        parser.add_argument("--method", action="append", metavar="NAME",
                            help=f"repeatable; one of {', '.join(METHODS)}")
    else:
        parser.add_argument("--particles", type=int, metavar="N")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epbp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("oracle", help="mesh LBP ground truth as a belief CSV")
    _common(p, many_n=False)
    for name in SINGLE_RUN:
        p = sub.add_parser(name, help=f"single {name} run; belief CSV on the mesh")
        _common(p, many_n=False)
    for name, text in (("bench", "accuracy/timing sweep"), ("trace", "per-iteration error")):
        p = sub.add_parser(name, help=text)
        _common(p, many_n=True)
    p = sub.add_parser("denoise", help="denoise a PGM image (synthetic pair if no input)")
    _common(p, many_n=False)
    p.add_argument("--input", metavar="PGM")
    p.add_argument("--noise", type=float, default=0.1, help="sigma for the synthetic pair")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {
        "seed": args.seed,
        "iterations": args.iterations,
        "mesh_points": args.mesh_points,
        "mesh_range": list(args.mesh_range) if args.mesh_range else None,
        "out": args.out,
    }
    if getattr(args, "method", None) is not None:
        changes["methods"] = [m for m in args.method if m]
    particles = args.particles
    if isinstance(particles, list):
        changes["n_list"] = particles
        if args.command == "trace":
            changes["trace_n"] = particles[0]
    if args.subquad is not None:
        ns = particles if isinstance(particles, list) else cfg.n_list
        changes["subquad_map"] = {int(n): args.subquad for n in ns}
    if "methods" in changes:
        # an explicitly empty list must fail validation, not fall back to defaults
        cfg = cfg.replace(**{k: v for k, v in changes.items() if k != "methods"})
        return ExperimentConfig(**{**cfg.to_dict(), "methods": changes["methods"]})
    return cfg.replace(**changes)


def _cmd_single(args, cfg) -> int:
    mrf = build_mrf(cfg)
    mesh = build_mesh(cfg, mrf)
    truth = run_mesh_lbp(mrf, mesh, cfg.truth_iterations)
    if args.command == "oracle":
        beliefs = truth
    else:
        method = SINGLE_RUN[args.command]
        if method == "epbp" and args.subquad is not None:
            method = "epbp-subquad"
        n = args.particles or 100
        cfg = cfg.replace(subquad_map={n: args.subquad} if args.subquad else None)
        est = make_estimator(method, n, cfg.seed, cfg)
        beliefs = est.fit(mrf, mesh).predict(mesh)
        print(f"{method} N={n} mean_l1={l1_error(beliefs, truth):.6g}", file=sys.stderr)
    _write_beliefs(beliefs, args.out)
    return 0


def _write_beliefs(beliefs, path):
    if path:
        write_beliefs_csv(beliefs, path)
        return
    out = sys.stdout
    out.write("node,x,density\n")
    for u, row in enumerate(beliefs.values):
        for xk, d in zip(beliefs.mesh.points, row):
            out.write(f"{u},{float(xk)!r},{float(d)!r}\n")


def _cmd_bench(args, cfg) -> int:
    runner = run_accuracy_bench if args.command == "bench" else run_iteration_trace
    if cfg.out:
        with CsvSink(cfg.out) as sink:
            result = runner(cfg, sink)
        write_meta(cfg.out, cfg, args.command, result)
    else:
        writer = csv.DictWriter(sys.stdout, fieldnames=CSV_HEADER)
        writer.writeheader()
        result = runner(cfg, lambda r: writer.writerow(format_row(r)))
    for f in result.failures:
        print(f"failed: {f}", file=sys.stderr)
    return 0 if result.ok else 1


def _cmd_denoise(args) -> int:
    n = args.particles or 30
    m = args.subquad if args.subquad is not None else 5
    k = args.iterations or 10
    seed = args.seed or 0
    clean = None
    if args.input:
        noisy = read_pgm(args.input)
    else:
        clean = synthetic_image(50)
        noisy = add_noise(clean, args.noise, seed)
    out = denoise(noisy, n, m, k, seed)
    if clean is not None:
        before = float(np.mean(np.abs(noisy.pixels - clean.pixels)))
        after = float(np.mean(np.abs(out.pixels - clean.pixels)))
        print(f"mean |noisy-clean|={before:.4f} mean |output-clean|={after:.4f}",
              file=sys.stderr)
    if args.out:
        write_pgm(out, args.out)
    else:
        sys.stdout.buffer.write(encode_pgm(out))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "denoise":
            return _cmd_denoise(args)
        cfg = _config(args)
        if args.command in ("bench", "trace"):
            return _cmd_bench(args, cfg)
        return _cmd_single(args, cfg)
    except InvalidInputError as exc:
        parser.print_usage(sys.stderr)
        print(f"epbp: error: {exc}", file=sys.stderr)
        return 2
    except (EPBPError, OSError, ArithmeticError) as exc:
        print(f"epbp: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
