"""Command line: ``noisydfl run|plot|bounds|validate``.

Exit codes: 0 success (diverged repeats included), 1 configuration error,
2 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, dump_resolved, parse_config

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2


def _run(args) -> int:
    from .runs import run_grid

    cfg = parse_config(args.config)
    result = run_grid(cfg)
    for line in result.summary:
        print(line)
    print(f"wrote {len(result.csv_paths)} CSV files under {result.out_dir / 'runs'}")
    return EXIT_OK


def _plot(args) -> int:
    from .plotting import render_plots

    run_dir = Path(args.dir)
    csvs = sorted((run_dir / "runs").glob("*_mean.csv"))
    if not csvs:
        raise FileNotFoundError(f"no *_mean.csv files under {run_dir / 'runs'}")
    out = Path(args.out) if args.out else run_dir / "plots"
    for p in render_plots(csvs, out):
        print(p)
    return EXIT_OK


def _bounds(args) -> int:
    from .report import report_bounds

    print(report_bounds(args.dir, probes=args.probes, samples=args.samples), end="")
    return EXIT_OK


def _validate(args) -> int:
    cfg = parse_config(args.config)
    print(dump_resolved(cfg), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="noisydfl", description="Decentralized learning over noisy channels.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment grid described by a config file")
    r.add_argument("config")
    r.set_defaults(func=_run)
    pl = sub.add_parser("plot", help="render SVG charts from a run directory")
    pl.add_argument("dir")
    pl.add_argument("--out", help="output directory (default: <dir>/plots)")
    pl.set_defaults(func=_plot)
    b = sub.add_parser("bounds", help="estimate constants and evaluate the convergence bounds")
    b.add_argument("dir")
    b.add_argument("--probes", type=int, default=10)
    b.add_argument("--samples", type=int, default=100)
    b.set_defaults(func=_bounds)
    v = sub.add_parser("validate", help="check a config file and print it fully resolved")
    v.add_argument("config")
    v.set_defaults(func=_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
