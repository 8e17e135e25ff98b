"""Command-line entry point.

Subcommands: `run` executes an experiment spec and writes CSV reports plus
figures; `summarize` re-aggregates a raw CSV and prints the improvement /
optimality-gap table; `plot` re-renders figures from existing CSVs;
`version` prints the package version. Exit codes: 0 success, 1 when any
method row failed, 2 on spec errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .experiments import SpecError, load_spec, run, summarize


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment spec")
    p_run.add_argument("--spec", required=True, help="flat key=value spec file")
    p_run.add_argument("--out", required=True, help="output directory for CSVs and figures")
    p_run.add_argument("--deterministic", action="store_true",
                       help="suppress timestamp header and wall-clock columns for byte-stable output")
    p_run.add_argument("--jobs", type=int, default=1, metavar="K",
                       help="snapshot-level worker processes (default 1)")
    p_run.add_argument("--no-plot", action="store_true", help="skip figure rendering")

    p_sum = sub.add_parser("summarize", help="re-aggregate a raw CSV and print gap table")
    p_sum.add_argument("--raw", required=True, help="raw.csv produced by run")
    p_sum.add_argument("--out", default=None, help="directory for aggregate.csv/gaps.csv (default: beside raw)")

    p_plot = sub.add_parser("plot", help="render figures from CSVs in a run directory")
    p_plot.add_argument("--dir", required=True, help="directory holding raw/aggregate/trace CSVs")

    sub.add_parser("version", help="print version")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "version":
        print(f"qnet {__version__}")
        return 0

    try:
        if args.command == "run":
            spec = load_spec(args.spec)
            result = run(
                spec,
                args.out,
                deterministic=args.deterministic,
                jobs=max(1, args.jobs),
                make_plots=not args.no_plot,
            )
            for path in result.files:
                print(path)
            if result.n_failures:
                print(f"{result.n_failures} method row(s) did not finish ok", file=sys.stderr)
                return 1
            return 0

        if args.command == "summarize":
            outdir = Path(args.out) if args.out else Path(args.raw).parent
            aggregate, gaps, warnings = summarize(args.raw, outdir)
            for warning in warnings:
                print(f"warning: {warning}", file=sys.stderr)
            print("experiment sweep_value method mean stderr n n_total")
            for row in aggregate:
                print(" ".join(str(v) for v in row))
            print()
            print("sweep_value dc_sc_improvement_pct_ao dc_sc_improvement_pct_exact ao_gap_pct_dc ao_gap_pct_sc")
            for row in gaps:
                print(" ".join(str(v) if str(v) else "-" for v in row[1:]))
            return 0

        if args.command == "plot":
            from . import plotting

            for path in plotting.render_report(args.dir):
                print(path)
            return 0
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return 2

    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
