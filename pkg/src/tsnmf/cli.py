"""Command-line driver.

Subcommands: generate, kron, factorize, sweep, inspect. Errors are emitted
as machine-readable JSON on stderr with exit codes 1 (usage), 2 (data),
3 (numerical failure).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import matio, pipeline
from .errors import TsnmfError, UsageError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, stage="cli")


def parse_r_values(text: str) -> tuple[int, ...]:
    """Parse "20", "1..30", or "1,5,20" into a rank tuple."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo, hi = int(lo), int(hi)
            if lo > hi:
                raise ValueError
            return tuple(range(lo, hi + 1))
        if "," in text:
            return tuple(int(tok) for tok in text.split(","))
        return (int(text),)
    except ValueError:
        raise UsageError(f"cannot parse rank specification {text!r}") from None


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("input", type=Path, help="matrix file (binary or text)")
    p.add_argument("--alg", default="spa",
                   help="comma-separated algorithms from spa,xray,gp")
    p.add_argument("--reduction", default="svd", choices=["qr", "svd"])
    p.add_argument("--normalization", default=None, choices=["l1", "none"],
                   help="column scaling for spa/gp (default: l1 when either runs)")
    p.add_argument("--sketch-k", type=int, default=None,
                   help="Gaussian projection rows (default ceil(2 r ln r))")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--chunk-rows", type=int, default=matio.DEFAULT_CHUNK_ROWS)
    p.add_argument("--combine-order", default="tree",
                   choices=["tree", "sequential", "first-come"])
    p.add_argument("--outdir", type=Path, default=Path("tsnmf-out"))
    p.add_argument("--no-cache", action="store_true",
                   help="ignore cached reduced artifacts")
    p.add_argument("--verbose", action="store_true")


def _config(args, r_values: tuple[int, ...]) -> pipeline.RunConfig:
    return pipeline.RunConfig(
        input=args.input,
        outdir=args.outdir,
        algorithms=tuple(tok.strip() for tok in args.alg.split(",") if tok.strip()),
        r_values=r_values,
        reduction=args.reduction,
        normalization=args.normalization,
        sketch_k=args.sketch_k,
        seed=args.seed,
        threads=args.threads,
        chunk_rows=args.chunk_rows,
        combine_order=args.combine_order,
        use_cache=not args.no_cache,
        verbose=args.verbose,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tsnmf",
                     description="Single-pass separable NMF for tall-and-skinny matrices")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a planted separable matrix")
    g.add_argument("output", type=Path)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--r", type=int, required=True)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--permutation", default="paper", choices=["paper", "identity"])
    g.add_argument("--chunk-rows", type=int, default=matio.DEFAULT_CHUNK_ROWS)

    k = sub.add_parser("kron", help="stream the self Kronecker product of a matrix")
    k.add_argument("input", type=Path)
    k.add_argument("output", type=Path)
    k.add_argument("--chunk-rows", type=int, default=matio.DEFAULT_CHUNK_ROWS)

    f = sub.add_parser("factorize", help="one-pass factorization at a single rank")
    _add_run_flags(f)
    f.add_argument("--r", required=True, type=int, help="separation rank")

    s = sub.add_parser("sweep", help="residual curve over a range of ranks")
    _add_run_flags(s)
    s.add_argument("--r", required=True,
                   help="rank range, e.g. 1..30 or 5,10,20")

    i = sub.add_parser("inspect", help="describe and validate a matrix file")
    i.add_argument("input", type=Path)
    i.add_argument("--validate", action="store_true",
                   help="stream the payload checking for non-finite entries")
    i.add_argument("--chunk-rows", type=int, default=matio.DEFAULT_CHUNK_ROWS)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "generate":
            if args.r > args.n:
                raise UsageError(f"r = {args.r} exceeds n = {args.n}", stage="cli")
            payload = pipeline.run_generate(
                m=args.m, n=args.n, r=args.r, noise=args.noise, seed=args.seed,
                permutation=args.permutation, out=args.output,
                chunk_rows=args.chunk_rows,
            )
        elif args.command == "kron":
            payload = pipeline.run_kron(args.input, args.output, args.chunk_rows)
        elif args.command == "factorize":
            args.outdir.mkdir(parents=True, exist_ok=True)
            payload = pipeline.run_factorize(_config(args, (args.r,)))
        elif args.command == "sweep":
            args.outdir.mkdir(parents=True, exist_ok=True)
            payload = pipeline.run_sweep(_config(args, parse_r_values(args.r)))
        else:
            payload = pipeline.run_inspect(args.input, validate=args.validate,
                                           chunk_rows=args.chunk_rows)
    except TsnmfError as exc:
        error = {"stage": exc.stage or "cli", "error": str(exc)}
        print(json.dumps(error, sort_keys=True), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(json.dumps({"stage": "io", "error": str(exc)}, sort_keys=True),
              file=sys.stderr)
        return 2
    print(json.dumps(payload, sort_keys=True, indent=1))
    return 0


if __name__ == "__main__":
    sys.exit(main())
