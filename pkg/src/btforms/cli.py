"""Command-line interface.

Subcommands::

    btforms solve   --config cfg.toml [--out DIR]   bound-state spectra
    btforms scatter --config cfg.toml [--out DIR]   phase shifts
    btforms verify  --config cfg.toml [--out DIR]   cross-form verifications
    btforms run     --config cfg.toml [--out DIR]   all three
    btforms export  report.json --out DIR           re-export a saved report

Exit status is 0 iff every verification passed and no solver rejection
occurred.  BTFORMS_THREADS caps the worker pool for per-energy solves.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .report import export as export_report
from .report import load_report
from .runner import ALL_TASKS, run

_TASKS = {
    "solve": {"spectrum"},
    "scatter": {"scatter"},
    "verify": {"verify"},
    "run": ALL_TASKS,
}


def _add_common(parser):
    parser.add_argument("--config", required=True, help="TOML configuration file")
    parser.add_argument("--out", help="output directory for CSV/JSON/figures")
    parser.add_argument(
        "--form",
        action="append",
        choices=["instant", "point", "front"],
        help="restrict to a form (repeatable); default: forms from the config",
    )
    parser.add_argument(
        "--tol-scale",
        type=float,
        default=None,
        help="multiply every verification tolerance by this factor",
    )
    parser.add_argument(
        "--no-figures", action="store_true", help="skip figure rendering on export"
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="btforms",
        description=(
            "Two-body mass-operator models in the instant, point, and front "
            "forms of dynamics, with cross-form equivalence verification."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, blurb in (
        ("solve", "solve the bound-state spectrum per requested form"),
        ("scatter", "compute reduced S-matrices and phase shifts"),
        ("verify", "run the enabled cross-form verifications"),
        ("run", "solve, scatter, and verify"),
    ):
        p = sub.add_parser(name, help=blurb)
        _add_common(p)
    exp = sub.add_parser("export", help="re-export a saved report.json")
    exp.add_argument("report", help="path to a previously written report.json")
    exp.add_argument("--out", required=True, help="output directory")
    exp.add_argument("--no-figures", action="store_true")
    return parser


def _summarize(report, stream=None):
    stream = stream if stream is not None else sys.stdout
    for row in report.spectra:
        print(
            f"[{row.form}] bound state {row.state_index}: "
            f"mass {row.mass_mev:.10f} MeV (binding {row.binding_mev:.10f})",
            file=stream,
        )
    if report.phase_shifts:
        n_forms = len({r.form for r in report.phase_shifts})
        n_energies = len({r.k_mev for r in report.phase_shifts})
        print(
            f"phase shifts: {n_energies} energies x {n_forms} form pipelines",
            file=stream,
        )
    for v in report.verifications:
        status = "PASS" if v.passed else "FAIL"
        print(
            f"{status} {v.name} [{v.forms}] value={v.value:.3e} "
            f"tol={v.tolerance:.1e} ({v.comparison})",
            file=stream,
        )
    for rej in report.solver_rejections:
        print(f"REJECTED: {rej}", file=stream)


def main(argv=None):
    args = build_parser().parse_args(argv)

    if args.command == "export":
        report = load_report(args.report)
        paths = export_report(report, args.out, figures=not args.no_figures)
        for p in paths:
            print(p)
        return 0 if report.all_passed else 1

    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.form:
        config.forms = tuple(f for f in config.forms if f in set(args.form))
        if not config.forms:
            print("error: --form selection removed every configured form", file=sys.stderr)
            return 2
    if args.tol_scale is not None:
        config.tolerance_scale = config.tolerance_scale * args.tol_scale

    report = run(config, tasks=_TASKS[args.command])
    _summarize(report)
    if args.out:
        for p in export_report(report, args.out, figures=not args.no_figures):
            print(p)
        if args.command == "solve":
            for p in _dump_tables(config, args.out):
                print(p)
    return 0 if report.all_passed else 1


def _dump_tables(config, out_dir):
    """Write the kernel and spectrum text tables next to the report."""
    import os

    from .massop import (
        ModelRejectionError,
        kernel_table,
        solve_bound_states,
        spectrum_table,
    )
    from .runner import build_problem

    _grid, kernel = build_problem(config)
    written = []
    path = os.path.join(out_dir, "kernel.csv")
    with open(path, "w") as fh:
        fh.write(kernel_table(kernel))
    written.append(path)
    try:
        spectrum = solve_bound_states(kernel)
    except ModelRejectionError:
        return written
    path = os.path.join(out_dir, "wavefunctions.csv")
    with open(path, "w") as fh:
        fh.write(spectrum_table(spectrum))
    written.append(path)
    return written


if __name__ == "__main__":
    raise SystemExit(main())
