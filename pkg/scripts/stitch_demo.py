"""Stitch full-coverage windows mod 3 and compare both denominators with exact ratios."""

import argparse

from primepatterns.prime_engine import all_patterns, count_patterns
from primepatterns.sampler import coverage_grid, sampled_grid, stitch


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--b1", type=int, default=6)
    ap.add_argument("--c", type=int, default=0, help="primes per window; 0 means full coverage")
    args = ap.parse_args()
    grid = coverage_grid(args.b1, 3) if args.c == 0 else sampled_grid(args.b1, args.c, 3)
    printed = stitch(grid, args.b1)
    tel = stitch(grid, args.b1, denominator="telescoped")
    exact = count_patterns(3, 2, x=9 * 10**args.b1)
    print("pattern,printed,telescoped,exact")
    for key in all_patterns(3, 2):
        print(f"{key.label},{printed[key]:.6f},{tel[key]:.6f},{exact.ratio(key):.6f}")


if __name__ == "__main__":
    main()
