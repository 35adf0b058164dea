"""Command line: ``igadr simulate | converge | info``.

Exit status is 0 on success, 1 for usage or configuration errors and 2 when
a run fails.
"""

import argparse
import csv
import logging
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import _accel
from .config import ConfigError, describe_keys, load_config, serialize
from .convergence import DT_RULES, convergence_study, step_size
from .output import write_snapshot
from .problems import PROBLEMS
from .stepping import run_simulation

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2

log = logging.getLogger("igadr")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad arguments; usage errors here are 1
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text):
    try:
        values = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("values must be positive integers")
    return values


def build_parser():
    parser = _Parser(prog="igadr", description="NURBS isogeometric advection-diffusion-reaction solver.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run a configured simulation",
                         formatter_class=argparse.RawDescriptionHelpFormatter,
                         epilog="config keys:\n" + describe_keys())
    sim.add_argument("--config", required=True, type=Path, help="flat 'key = value' file")
    sim.add_argument("--out", type=Path, default=None, help="output directory (overrides out_dir)")

    conv = sub.add_parser("converge", help="mesh refinement study against an exact solution")
    conv.add_argument("--problem", required=True, choices=sorted(PROBLEMS))
    conv.add_argument("--degrees", required=True, type=_int_list, help="e.g. 1,2,3,4")
    conv.add_argument("--meshes", required=True, type=_int_list, help="elements per side, e.g. 8,16,32")
    conv.add_argument("--dt-rule", default="matched",
                      help=f"time step rule: {', '.join(DT_RULES)} (default matched)")
    conv.add_argument("--t-end", type=float, default=1.0)
    conv.add_argument("--bc", default=None, help="boundary condition (default: the problem's)")
    conv.add_argument("--out", type=Path, default=None, help="also write the table as CSV")

    sub.add_parser("info", help="version, backend and available problems")
    return parser


def cmd_simulate(args):
    cfg = load_config(args.config)
    out_dir = Path(args.out) if args.out is not None else Path(cfg.out_dir)
    problem = cfg.build_problem()
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(serialize(cfg), encoding="utf-8")
    log.info("running %s: p=%d, %dx%d, dt=%g, t_end=%g", cfg.problem, cfg.degree, cfg.nx, cfg.ny,
             cfg.dt, cfg.t_end)
    res = run_simulation(problem, cfg)

    class _Snap:
        def __init__(self, U, t):
            self.U, self.t = U, t

    snaps = res.snapshots or [(res.state.t, res.state.U)]
    for k, (t, U) in enumerate(snaps):
        name = f"snapshot_{k:04d}" if len(snaps) > 1 else "final"
        write_snapshot(_Snap(U, t), res.mesh, cfg.sample_n, out_dir / name)
    if res.diagnostics:
        with open(out_dir / "diagnostics.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(res.diagnostics[0]))
            writer.writeheader()
            writer.writerows(res.diagnostics)
    U = res.state.U
    print(f"{cfg.problem}: {res.state.step} steps to t={res.state.t:g} (dt={res.dt:g}, "
          f"substeps={res.n_substeps}, ndof={res.mesh.ndof})")
    for c, name in zip(range(U.shape[0]), "uv"):
        print(f"  {name}: min {U[c].min():.6g} max {U[c].max():.6g}")
    print(f"  factorizations: {dict(sorted(res.factorizations.items()))}")
    print(f"  output: {out_dir}")
    return EXIT_OK


def cmd_converge(args):
    def progress(row):
        log.info("p=%d n=%d Linf=%.3e (%.1fs)", row["degree"], row["n"], row["Linf"], row["seconds"])

    try:
        step_size(args.dt_rule, 1, 1.0)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = convergence_study(args.problem, args.degrees, args.meshes, args.dt_rule, args.t_end,
                               args.bc, progress=progress)
    print(report.to_text())
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(report.rows[0]))
            writer.writeheader()
            writer.writerows(report.rows)
    return EXIT_OK


def cmd_info(args):
    try:
        version = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        version = "unknown"
    print(f"igadr {version}")
    print(f"numpy {np.__version__}")
    if _accel.HAVE_NUMBA:
        print(f"numba {_accel.numba.__version__} ({_accel.numba.get_num_threads()} threads)")
    else:
        print("numba not installed")
    print(f"backend {_accel.backend()}")
    print("problems " + ", ".join(sorted(PROBLEMS)))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "converge": cmd_converge, "info": cmd_info}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        _accel.apply_thread_cap()
    except ValueError:
        print("igadr: IGA_THREADS must be a positive integer", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"igadr: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"igadr: {exc}", file=sys.stderr)
        return EXIT_USAGE if args.command == "simulate" and Path(exc.filename or "") == args.config \
            else EXIT_FAILURE
    except (ArithmeticError, RuntimeError, OSError, ValueError) as exc:
        print(f"igadr: run failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
