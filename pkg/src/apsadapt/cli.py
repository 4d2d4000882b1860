"""Command-line entry point: ``apsadapt <subcommand> [options]``."""

import argparse
import sys

from . import kernels
from .experiments import load_config, run

SUBCOMMANDS = {
    "solve": "single_solve",
    "table-uniform": "uniform_table",
    "table-aniso": "aniso_table",
    "conditioning": "conditioning",
    "adapt": "adapt_study",
}

HELP = {
    "solve": "solve once on a structured nx x ny mesh",
    "table-uniform": "effectivity indices on the isotropic mesh ladder",
    "table-aniso": "effectivity indices on the anisotropic mesh ladders",
    "conditioning": "P-model conditioning against APS accuracy across eps",
    "adapt": "adaptive loop over a TOL ladder",
}


def build_parser():
    parser = argparse.ArgumentParser(prog="apsadapt", description="Anisotropic AP diffusion solver and adaptation runs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s 0.1.0 ({kernels.BACKEND} kernels)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", help="key = value file; flags override it")
        p.add_argument("--case", choices=["smooth", "layer"])
        p.add_argument("--alpha", type=float)
        p.add_argument("--eps", type=float)
        p.add_argument("--tol", type=float, nargs="+")
        p.add_argument("--indicator", choices=["full", "simplified"])
        p.add_argument("--nx", type=int)
        p.add_argument("--ny", type=int)
        p.add_argument("--out")
        p.add_argument("--seed", type=int)
        p.add_argument("--max-iter", type=int, dest="max_iter")
        p.add_argument("--levels", type=int, help="use only the first LEVELS ladder entries")
        p.add_argument("--until-band", action="store_const", const=False, dest="fixed",
                       help="stop when the indicator stays in the TOL band")
        p.add_argument("--baseline", action="store_const", const=True,
                       help="also solve on the h=0.00625 uniform mesh (adapt)")
        p.add_argument("--no-vtk", action="store_const", const=False, dest="vtk")
    return parser


def _format(rows):
    if not rows:
        return ""
    keys = list(rows[0])
    cells = [[_cell(r.get(k)) for k in keys] for r in rows]
    widths = [max(len(k), *(len(c[i]) for c in cells)) for i, k in enumerate(keys)]
    lines = ["  ".join(k.rjust(w) for k, w in zip(keys, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


def _cell(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    overrides["experiment"] = SUBCOMMANDS[args.command]
    if overrides.get("tol") is not None:
        overrides["tol"] = tuple(overrides["tol"])
    try:
        config = load_config(args.config, **overrides)
    except (OSError, ValueError, TypeError) as exc:
        print(f"apsadapt: {exc}", file=sys.stderr)
        return 2
    rows = run(config)
    print(_format(rows))
    print(f"results written to {config.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
