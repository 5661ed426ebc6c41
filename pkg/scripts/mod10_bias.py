"""Consecutive-prime pair counts mod 10 over the first N primes."""

import argparse

from primepatterns.prime_engine import count_patterns


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--first", type=float, default=1e7, help="number of leading primes")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    n = int(args.first)
    res = count_patterns(10, 2, first=n, workers=args.workers)
    uniform = res.total_pairs / 16
    print(f"first {n} primes, {res.total_pairs} qualifying pairs, uniform share {uniform:.0f}")
    for key in sorted(res.counts):
        c = res.counts[key]
        print(f"{key.label:>5} {c:>10} {c / uniform - 1:+.3%}")


if __name__ == "__main__":
    main()
