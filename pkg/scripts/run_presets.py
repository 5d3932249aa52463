#!/usr/bin/env python3
"""Condition report for every registered preset, as a compact table."""

import argparse
import time

from dichequiv import check_all, preset
from dichequiv.scenarios import PRESETS


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--horizon", type=int, default=200)
    ap.add_argument("--verbose", action="store_true", help="print each full report")
    args = ap.parse_args()
    cols = ["d0", "d1", "d2", "d3", "d4", "d5", "d6", "d7", "c2"]
    print(f"{'preset':<12}" + "".join(f"{c:>6}" for c in cols) + f"{'q':>10}{'sec':>7}")
    for name in PRESETS:
        t0 = time.perf_counter()
        rep = check_all(*preset(name), horizon=args.horizon)
        dt = time.perf_counter() - t0
        marks = {"satisfied": "ok", "violated": "NO", "horizon-limited": "hz"}
        row = "".join(f"{marks.get(rep.statuses[c].status, '?') if c in rep.statuses else '-':>6}"
                      for c in cols)
        q = "-" if rep.q is None else f"{rep.q:.4f}"
        print(f"{name:<12}{row}{q:>10}{dt:>7.2f}")
        if args.verbose:
            print(rep.to_text(), "\n")


if __name__ == "__main__":
    main()
