#!/usr/bin/env python3
"""Q0 against (d_t phi)^2 on identical data for several amplitudes.

    python3 scripts/null_vs_nonnull.py --config configs/compare_amplitudes.json
"""

import argparse
import logging
import math

from shortpulse.studyctl import cmd_compare, load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/compare_amplitudes.json")
    ap.add_argument("--out")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO)
    rep = cmd_compare(load_config(args.config), out=args.out, threads=args.threads)
    for label, entry in rep["couplings"].items():
        for run in entry["runs"]:
            b = run["blow_up"]
            t = b["t_star"] if b["detected"] else math.inf
            print(f"{label:10s} null={entry['is_null']!s:5s} amplitude {run['amplitude']:g}: "
                  f"t* = {t:.4f}  last ubar = {run['last_marched_ubar']:.3f}")
    print("verdict:", rep["verdict"])


if __name__ == "__main__":
    main()
