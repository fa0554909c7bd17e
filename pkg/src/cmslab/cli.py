"""Command line entry point: ``cmslab verify | fields | energy``.

Exit codes: 0 all identities pass, 1 at least one fails, 2 usage or
surface-spec error.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

from . import harness
from .expr import ExprEvalError, ExprSyntaxError
from .geometry import DegenerateChartError, SurfaceSpecError
from .grid import DEFAULT_POLE_OFFSET, DEFAULT_TIMES, GridSpec

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _grid(text):
    try:
        nu, nv = (int(p) for p in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NUxNV, got {text!r}") from None
    return nu, nv


def _times(text):
    try:
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _param(text):
    key, sep, val = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected k=v, got {text!r}")
    return key.strip(), val.strip()


def _surface_args(p):
    p.add_argument("--surface", required=True, help="surface JSON file or builtin:NAME")
    p.add_argument("--param", type=_param, action="append", default=[], metavar="K=V",
                   help="builtin argument (expression) or numeric parameter override; repeatable")
    p.add_argument("--pole-offset", type=float, default=DEFAULT_POLE_OFFSET,
                   help="distance kept from clamped chart edges (default %(default)g)")


def build_parser():
    parser = argparse.ArgumentParser(prog="cmslab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the identity suite and write a report")
    _surface_args(p)
    p.add_argument("--grid", type=_grid, default=(64, 64), metavar="NUxNV")
    p.add_argument("--times", type=_times, default=DEFAULT_TIMES, metavar="T0,T1,...")
    p.add_argument("--order", type=int, choices=(3, 4), default=3)
    p.add_argument("--tol-first", type=float, default=harness.DEFAULT_TOLERANCES["first"])
    p.add_argument("--tol-third", type=float, default=harness.DEFAULT_TOLERANCES["third"])
    p.add_argument("--report", metavar="PATH", help="write the JSON report here")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="seed for the random test fields")
    p.add_argument("--quiet", action="store_true", help="suppress the text table")

    p = sub.add_parser("fields", help="export sampled fields")
    _surface_args(p)
    p.add_argument("--grid", type=_grid, default=(64, 64), metavar="NUxNV")
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--quantity", required=True, metavar="NAME[,NAME...]",
                   help="quantities or groups (group:NAME): " + ", ".join(harness.GROUPS))
    p.add_argument("--format", choices=("csv", "structured"), default="csv")
    p.add_argument("--out", default=".", metavar="DIR")
    p.add_argument("--order", type=int, choices=(3, 4), default=3)

    p = sub.add_parser("energy", help="kinetic energy, its rate, power and the work-energy residual")
    _surface_args(p)
    p.add_argument("--grid", type=_grid, default=(128, 128), metavar="NUxNV")
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--density", type=float, default=1.0)
    for c in "xyz":
        p.add_argument(f"--alpha-{c}", metavar="EXPR", help=f"{c} component of the force per unit mass")
    p.add_argument("--step", type=float, default=1e-3, help="time step of the finite-difference rate")
    p.add_argument("--out", metavar="PATH", help="write the JSON document here")
    return parser


def _load(args):
    return harness.load_surface(args.surface, dict(args.param))


def _write(path, text):
    path = Path(path)
    try:
        if path.parent != Path("."):
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from exc


def cmd_verify(args):
    grid = GridSpec(*args.grid, args.pole_offset, args.times)
    spec = _load(args)
    res = harness.run_suite(spec, grid, {"tol_first": args.tol_first, "tol_third": args.tol_third},
                            args.order, args.workers, args.seed)
    if not args.quiet:
        sys.stdout.write(harness.render_table(res))
    if args.report:
        _write(args.report, harness.to_json(harness.suite_document(res)) + "\n")
    return EXIT_PASS if res.passed else EXIT_FAIL


def cmd_fields(args):
    grid = GridSpec(*args.grid, args.pole_offset, (args.t,))
    spec = _load(args)
    names = [n.strip() for n in args.quantity.split(",") if n.strip()]
    try:
        harness.expand_quantities(names)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    try:
        paths = harness.export_fields(spec, grid, args.t, names, args.format, args.out, args.order)
    except OSError as exc:
        raise UsageError(f"cannot write to {args.out}: {exc.strerror}") from exc
    for p in paths:
        print(p)
    return EXIT_PASS


def cmd_energy(args):
    grid = GridSpec(*args.grid, args.pole_offset, (args.t,))
    spec = _load(args)
    given = [getattr(args, f"alpha_{c}") for c in "xyz"]
    if any(given) and not all(given):
        raise UsageError("give all three of --alpha-x, --alpha-y, --alpha-z or none")
    alpha = given if all(given) else None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        rep = harness.kinematics.power_and_work_energy(spec, grid, args.t, args.density, alpha, args.step)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    doc = harness.energy_document(rep, spec, grid, alpha)
    for key in ("kinetic_energy", "rate_formula", "rate_numeric", "power", "residual_integral",
                "bookkeeping_numeric"):
        print(f"{key:22s} {harness.fmt(doc[key])}")
    if args.out:
        _write(args.out, harness.to_json(doc) + "\n")
    return EXIT_PASS


COMMANDS = {"verify": cmd_verify, "fields": cmd_fields, "energy": cmd_energy}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, SurfaceSpecError, DegenerateChartError, ExprSyntaxError, ExprEvalError, ValueError) as exc:
        print(f"cmslab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
