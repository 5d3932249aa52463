#!/usr/bin/env python3
"""Print D^s(Gamma_0) for s = 1..r with coefficient sums next to Bell numbers."""

import argparse

from dichequiv.dif import expand_D_power, format_expression, set_partitions


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-r", type=int, default=6)
    args = ap.parse_args()
    for s in range(1, args.r + 1):
        expr = expand_D_power(s, args.r)
        bell = sum(1 for _ in set_partitions(s))
        print(f"s={s}  sum={sum(expr.coefficients()):<4d} bell={bell:<4d} {format_expression(expr)}")


if __name__ == "__main__":
    main()
