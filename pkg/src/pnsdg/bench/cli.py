"""
Command-line entry point for the convergence experiments.

Example::

    pnsdg-bench --p 2 2.5 --rho 0.1 0.2 --levels 1-4 --table --out eoc.csv
"""
from __future__ import annotations

import argparse
import logging
import sys

from ..solver import NewtonConfig
from .experiment import ExperimentConfig, run_experiment, to_csv, to_markdown
from .errors import ERROR_NAMES


def _levels(text: str) -> tuple:
    if "-" in text:
        lo, hi = text.split("-", 1)
        out = tuple(range(int(lo), int(hi) + 1))
    else:
        out = tuple(int(x) for x in text.split(","))
    if not out or min(out) < 0:
        raise argparse.ArgumentTypeError(f"invalid level list {text!r}")
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pnsdg-bench", description="EOC experiments for the p-Navier-Stokes DG scheme")
    ap.add_argument("--p", type=float, nargs="+", default=[2.0], help="power-law exponents")
    ap.add_argument("--rho", type=float, nargs="+", default=[0.2], help="regularity parameters")
    ap.add_argument("--levels", type=_levels, default=(1, 2, 3, 4), help="e.g. 1-4 or 1,2,3")
    ap.add_argument("--variant-stress", choices=["ldg", "sip"], default="ldg")
    ap.add_argument("--variant-convective", choices=["1", "2"], default="2")
    ap.add_argument("--alpha", type=float, default=2.5)
    ap.add_argument("--delta", type=float, default=1e-4)
    ap.add_argument("--T", type=float, default=0.1)
    ap.add_argument("--out", help="CSV output path")
    ap.add_argument("--table", action="store_true", help="print markdown EOC tables to stdout")
    ap.add_argument("--clement", action="store_true", help="use temporal means of the forcing")
    ap.add_argument("--threads", type=int, default=1, help="cases run in parallel processes")
    ap.add_argument("--boundary", choices=["exact", "zero"], default="exact", help="Dirichlet data in boundary jumps")
    ap.add_argument("--unfrozen-shift", action="store_true", help="differentiate the LDG face shift in Newton")
    ap.add_argument("--solver", choices=["auto", "superlu", "pardiso"], default="auto")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    cfg = ExperimentConfig(
        ps=tuple(args.p),
        rhos=tuple(args.rho),
        levels=args.levels,
        stress_variant=args.variant_stress,
        convective_variant="I" if args.variant_convective == "1" else "II",
        alpha=args.alpha,
        delta=args.delta,
        T=args.T,
        clement=args.clement,
        boundary=args.boundary,
        frozen_shift=not args.unfrozen_shift,
        newton=NewtonConfig(linear_solver=args.solver),
    )
    reports, failures = run_experiment(cfg, threads=args.threads)
    text = to_csv(reports, args.out)
    if args.table:
        for q in ERROR_NAMES:
            print(to_markdown(reports, q))
            print()
    elif not args.out:
        sys.stdout.write(text)
    for cid, msg in failures:
        print(f"case {cid} failed: {msg}", file=sys.stderr)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
