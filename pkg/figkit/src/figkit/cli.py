"""khm-plot: render figures from khm-lab CSV outputs."""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, FigureSpec, plot
from .schemas import SchemaError


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="khm-plot",
                                description="figures from khm-lab CSV outputs")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--in", dest="inputs", nargs="+", required=True,
                   help="input CSV file(s); sweep takes one energy CSV per nu")
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--epsilon", type=float, default=1.0,
                   help="energy input rate used for normalization")
    p.add_argument("--raw", action="store_true", help="disable eps*l normalization")
    p.add_argument("--no-ref-lines", action="store_true",
                   help="suppress the -4/3 and -4/5 reference lines")
    p.add_argument("--linear-x", action="store_true", help="linear separation axis")
    p.add_argument("--ell-d", type=float, default=None, help="shade from this scale")
    p.add_argument("--ell-i", type=float, default=None, help="shade up to this scale")
    p.add_argument("--nus", type=str, default="",
                   help="comma-separated viscosities matching the sweep inputs")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    nus = [float(v) for v in args.nus.split(",") if v] if args.nus else []
    try:
        spec = FigureSpec(
            kind=args.kind, inputs=args.inputs, output=args.out,
            epsilon=args.epsilon, raw=args.raw, log_x=not args.linear_x,
            reference_lines=not args.no_ref_lines,
            ell_d=args.ell_d, ell_i=args.ell_i, nus=nus,
        )
        plot(spec)
    except (SchemaError, ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
