"""Command-line entry point: run one convergence study and write its report."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .driver import (REFINE_MODES, SNAPSHOT_ITERATIONS, RunConfig, adaptive_loop, format_row,
                     write_table)
from .output import plot_control, plot_convergence, write_snapshot_vtk
from .problems import PROBLEM_IDS, problem_catalog

log = logging.getLogger("bbafem")


def run_and_report(config: RunConfig, verbose: bool = False):
    """Run the loop, then write the table, the convergence plot and exports."""
    out = Path(config.out or "results")
    out.mkdir(parents=True, exist_ok=True)
    spec = problem_catalog(config.problem, config.gamma)
    switch = spec.exact_adjoint if spec.has_exact else None

    def export(it, snap, label):
        stem = out / f"{config.tag}_{label}"
        if config.export_svg:
            plot_control(stem.with_suffix(".svg"), snap.mesh, snap.control, switch,
                         title=f"{config.tag}, iteration {it}")
        if config.export_vtk:
            write_snapshot_vtk(stem.with_suffix(".vtk"), snap)

    def callback(it, row, snap):
        if verbose:
            log.info("it %2d  %s  fp=%d  %.1fs", it, format_row(row), row.fp_iterations, row.wall_time)
        if it in SNAPSHOT_ITERATIONS:
            export(it, snap, f"it{it:02d}")

    record = adaptive_loop(config, callback, spec=spec)
    record.table_path = write_table(record, out / f"{config.tag}.dat")
    plot_convergence(out / f"{config.tag}_convergence.png", record)
    if record.final is not None:
        export(record.final.iteration, record.final, "final")
    return record


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bbafem",
                                 description="Adaptive FEM for semilinear bang-bang optimal control.")
    ap.add_argument("--problem", required=True, choices=PROBLEM_IDS)
    ap.add_argument("--refine", default="adaptive", choices=REFINE_MODES)
    ap.add_argument("--gamma", type=float, default=1.0)
    ap.add_argument("--theta", type=float, default=0.5)
    ap.add_argument("--max-dofs", type=int, default=100_000)
    ap.add_argument("--max-iters", type=int, default=60)
    ap.add_argument("--resolution", type=int, default=None, help="initial mesh resolution")
    ap.add_argument("--newton-tol", type=float, default=1e-10)
    ap.add_argument("--fp-tol", type=float, default=1e-10)
    ap.add_argument("--out", default="results")
    ap.add_argument("--export-vtk", action="store_true")
    ap.add_argument("--export-svg", action="store_true")
    ap.add_argument("--seed", type=int, default=None, help="seed for randomized test oracles")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)  # exits with status 2 on bad usage
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    if args.seed is not None:
        np.random.seed(args.seed)
    try:
        config = RunConfig(problem=args.problem, refine=args.refine, gamma=args.gamma,
                           theta=args.theta, max_dofs=args.max_dofs,
                           max_iterations=args.max_iters, newton_tol=args.newton_tol,
                           fp_tol=args.fp_tol, resolution=args.resolution, out=Path(args.out),
                           export_vtk=args.export_vtk, export_svg=args.export_svg)
    except ValueError as exc:
        ap.error(str(exc))
    try:
        record = run_and_report(config, verbose=args.verbose)
    except Exception as exc:  # report and fail, no traceback for users
        print(f"bbafem: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(record.table_path)
    print(format_row(record.rows[-1]))
    return 0


if __name__ == "__main__":
    sys.exit(main())
