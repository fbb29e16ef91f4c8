#!/usr/bin/env python3
"""Delta scan at fixed profile: one run per delta, then exponent fits from the CSVs.

    python3 scripts/delta_scan.py --config configs/study.json --out runs/scan --threads 3
"""

import argparse
import json
import logging

from shortpulse.studyctl import RunConfig, cmd_study, load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--deltas", type=float, nargs="+", default=[0.1, 0.05, 0.025])
    ap.add_argument("--out", default="runs/scan")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO)
    cfg = load_config(args.config) if args.config else RunConfig().validate()
    rep = cmd_study(cfg, args.deltas, out=args.out, threads=args.threads)
    for name, fit in rep["fits"].items():
        lo, hi = rep["bands"][name]
        print(f"{name:12s} exponent {fit['exponent']:+.3f}  band [{lo}, {hi}]  {'ok' if rep['verdicts'][name] else 'OUT'}")
    print(f"weighted energy max/min = {rep['weighted_max_over_min']:.2f}")
    print(json.dumps({k: v for k, v in rep["verdicts"].items() if k not in rep["fits"]}, indent=2))


if __name__ == "__main__":
    main()
