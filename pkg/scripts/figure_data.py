"""Plot data for the mod 3 pair figures: proportions, residuals, fitted residuals, extension."""

import argparse
from pathlib import Path

from primepatterns.analysis import (
    Series,
    emit_plot_data,
    extend_series,
    fit_lower_order,
    log_grid,
    residuals,
    write_residuals,
)
from primepatterns.prime_engine import count_patterns_at, prime_counts_at
from primepatterns.sampler import coverage_grid, stitch


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="figdata")
    ap.add_argument("--top", type=float, default=1e8, help="largest exactly counted x")
    ap.add_argument("--stitch-b1", type=int, nargs="*", default=[7, 8], help="grid tops for the extension")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    xs = log_grid(1e4, args.top, 8)
    counts = count_patterns_at(3, 2, x=xs)
    pis = prime_counts_at(xs)
    grids = {b1: stitch(coverage_grid(b1, 3), b1) for b1 in args.stitch_b1 if 9 * 10**b1 > args.top}
    for a, b in ((1, 1), (1, 2), (2, 1), (2, 2)):
        tag = f"{a}{b}"
        prop = Series(xs, [c[(a, b)] / p for c, p in zip(counts, pis)], "ratio")
        emit_plot_data(prop, "proportion", out / f"proportion_{tag}.csv")
        r = residuals(Series(xs, [c[(a, b)] for c in counts], "count"), "eq19", 3, a, b)
        write_residuals(r, out / f"residuals_{tag}.csv")
        emit_plot_data(r, "residual", out / f"residual_{tag}.csv")
        emit_plot_data(r, "residual-after-fit", out / f"residual_fit_{tag}.csv")
        fit = fit_lower_order(r)
        print(f"({a},{b}) c={fit.coefficient:+.4f} rms {fit.rms_before:.3e} -> {fit.rms_after:.3e}")
        if grids:
            ext = extend_series(prop, [(9 * 10**b1, est[(a, b)]) for b1, est in sorted(grids.items())])
            emit_plot_data(ext, "proportion", out / f"extended_{tag}.csv")
            print(f"      junction step {ext.jump:+.4f}")


if __name__ == "__main__":
    main()
