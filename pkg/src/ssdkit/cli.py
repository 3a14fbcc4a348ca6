"""Command-line front end: verify suites, bench grids, comparison table.

Exit codes: 0 success, 1 failed verification, 2 configuration error.
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

from .bench import (
    BENCH_ALGORITHMS,
    DTYPES,
    FORMATS,
    SUITES,
    BenchConfig,
    run_bench,
    run_table,
    run_verify,
)
from .tensor import ConfigurationError

_GRID_KEYS = {"T": "t_grid", "N": "n_values", "P": "p_values", "Q": "q_values", "H": "h_values"}


def parse_grid(specs) -> dict:
    """Turn 'T=64,128,N=8' grid strings into BenchConfig keyword overrides.

    Commas separate values; a comma followed by name= starts the next axis,
    so both 'T=64,128,N=8' and repeated --grid flags work.
    """
    overrides = {}
    for spec in specs or ():
        for part in re.split(r",(?=[A-Za-z]+=)", spec):
            if not part.strip():
                continue
            key, eq, values = part.partition("=")
            key = key.strip().upper()
            if not eq or key not in _GRID_KEYS:
                raise ConfigurationError(
                    f"bad grid entry {part!r}; axes are {sorted(_GRID_KEYS)}, e.g. T=64,128"
                )
            try:
                grid = tuple(int(v) for v in values.split(",") if v.strip())
            except ValueError:
                raise ConfigurationError(f"grid values must be integers, got {part!r}")
            overrides[_GRID_KEYS[key]] = grid
    return overrides


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dtype", choices=DTYPES, default="f64")
    p.add_argument("--grid", action="append", metavar="AXIS=V1,V2,...",
                   help="grid override, e.g. T=64,128,256,512 or N=4,8,16,32")
    p.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssdkit",
        description="structured state-space duality toolkit: verify, bench, table",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pv = sub.add_parser("verify", help="run the cross-algorithm invariant suites")
    _common_flags(pv)
    pv.add_argument("--suite", action="append", choices=list(SUITES),
                    help="run only this suite family (repeatable)")
    pv.add_argument("--format", choices=FORMATS, default="json")
    pv.add_argument("--inject-fault", action="store_true",
                    help="self-test: corrupt one scan case so verify must fail")

    pb = sub.add_parser("bench", help="measure op-count and wall-time grids")
    _common_flags(pb)
    pb.add_argument("--algorithms", default=",".join(BenchConfig().algorithms),
                    help=f"comma list from {sorted(BENCH_ALGORITHMS)}")
    pb.add_argument("--reps", type=int, default=1, help="wall-time repetitions (min is kept)")
    pb.add_argument("--format", choices=FORMATS, default="json")
    pb.add_argument("--no-wall", action="store_true",
                    help="zero wall_ns for byte-reproducible reports")

    pt = sub.add_parser("table", help="attention / SSM / SSD comparison table")
    _common_flags(pt)
    pt.add_argument("--format", choices=("text",) + FORMATS, default="text")

    return parser


def cmd_verify(args) -> int:
    cfg = BenchConfig(
        seed=args.seed,
        dtype=args.dtype,
        suites=tuple(args.suite) if args.suite else None,
        inject_fault=args.inject_fault,
        fmt=args.format,
        wall=False,
        **parse_grid(args.grid),
    )
    report = run_verify(cfg)
    _emit(report.render(cfg.fmt), args.out)
    for c in report.failures:
        print(f"FAIL {c['case']} params={c['params']} max_rel_err={c['max_rel_err']:.3e}",
              file=sys.stderr)
    n = len(report.cases)
    ok = n - len(report.failures)
    print(f"verify: {ok}/{n} cases passed across {len(report.families())} suite families",
          file=sys.stderr)
    return 0 if report.passed else 1


def cmd_bench(args) -> int:
    cfg = BenchConfig(
        seed=args.seed,
        dtype=args.dtype,
        algorithms=tuple(a.strip() for a in args.algorithms.split(",") if a.strip()),
        repetitions=args.reps,
        wall=not args.no_wall,
        fmt=args.format,
        **parse_grid(args.grid),
    )
    report = run_bench(cfg)
    _emit(report.render(cfg.fmt), args.out)
    return 0


def cmd_table(args) -> int:
    cfg = BenchConfig(seed=args.seed, dtype=args.dtype, **parse_grid(args.grid))
    report, text = run_table(cfg)
    _emit(text if args.format == "text" else report.render(args.format), args.out)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"verify": cmd_verify, "bench": cmd_bench, "table": cmd_table}[args.command]
    try:
        return handler(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
