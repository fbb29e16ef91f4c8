"""Command line entry point: ``shortpulse {run,study,convergence,compare}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ShortPulseError
from .studyctl import RunConfig, cmd_compare, cmd_convergence, cmd_run, cmd_study, load_config


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shortpulse", description="Short-pulse wave maps in spherical symmetry.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration (defaults are used when omitted)")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--threads", type=int, default=1, help="worker processes for multi-run commands")
        sp.add_argument("--checkpoint-every", type=int, default=None, help="write a checkpoint every K ubar-levels")
        return sp

    common(sub.add_parser("run", help="single evolution with all diagnostics"))
    st = common(sub.add_parser("study", help="delta scan with cross-run exponent fits"))
    st.add_argument("--deltas", type=float, nargs="+", default=[0.1, 0.05, 0.025])
    cv = common(sub.add_parser("convergence", help="grid-halving convergence order"))
    cv.add_argument("--levels", type=int, default=3)
    cv.add_argument("--ubar-max", type=float, default=4.0)
    common(sub.add_parser("compare", help="null versus non-null coupling on identical data"))
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig().validate()
        if args.checkpoint_every is not None and args.command != "run":
            print("warning: --checkpoint-every only applies to 'run'", file=sys.stderr)
        if args.command == "run":
            path = cmd_run(cfg, out=args.out, checkpoint_every=args.checkpoint_every)
            print(path)
        elif args.command == "study":
            rep = cmd_study(cfg, args.deltas, out=args.out, threads=args.threads)
            print(json.dumps(rep["verdicts"], indent=2, sort_keys=True))
        elif args.command == "convergence":
            rep = cmd_convergence(cfg, args.levels, out=args.out, ubar_max=args.ubar_max)
            print(json.dumps({"order": rep["order"], "errors": rep["errors"]}, indent=2))
        else:
            rep = cmd_compare(cfg, out=args.out, threads=args.threads)
            print(rep["verdict"])
    except ShortPulseError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
