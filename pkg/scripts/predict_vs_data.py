"""Conjectured pair counts mod 3 next to exact counts and the simplified asymptotic."""

import argparse

from primepatterns.conjecture import ConjectureParams, predict, simplified_prediction
from primepatterns.prime_engine import count_patterns_at, prime_counts_at


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--x", default="1e5,1e6,1e7,1e8", help="comma-separated limits")
    ap.add_argument("--nmax", type=int, default=5)
    ap.add_argument("--normalization", choices=("pnt", "printed"), default="pnt")
    args = ap.parse_args()
    xs = [int(float(t)) for t in args.x.split(",")]
    counts = count_patterns_at(3, 2, x=xs)
    pis = prime_counts_at(xs)
    print("x,pattern,observed/pi,conjecture/pi,eq19/pi")
    for x, c, pi in zip(xs, counts, pis):
        for a, b in ((1, 1), (1, 2), (2, 1), (2, 2)):
            params = ConjectureParams(3, a, b, n_max=args.nmax, normalization=args.normalization)
            pred = predict(params, x).value
            simple = simplified_prediction(x, a == b)
            print(f"{x},{a}-{b},{c[(a, b)] / pi:.6f},{pred / pi:.6f},{simple / pi:.6f}")


if __name__ == "__main__":
    main()
