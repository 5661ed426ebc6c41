"""Windowed pattern frequencies and the li-weighted stitching of a window grid."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from collections.abc import Iterable, Mapping

import numpy as np

from .errors import EmptyInputError, InvalidParameterError, MissingWindowError, TableIOError
from .prime_engine import (
    MAX_K,
    PatternKey,
    all_patterns,
    iter_prime_segments,
    li,
    primes_after,
)

DENOMINATORS = ("printed", "telescoped")


@dataclass(frozen=True)
class SampleWindow:
    X: int
    C: int
    q: int
    k: int = 2
    full_coverage: bool = False

    def __post_init__(self):
        if self.X < 2:
            raise InvalidParameterError("window start X must be >= 2")
        if self.C < 1:
            raise InvalidParameterError("window prime count C must be >= 1")
        if self.q < 3 or not 1 <= self.k <= MAX_K:
            raise InvalidParameterError("need q >= 3 and 1 <= k <= 4")


@dataclass(frozen=True)
class FrequencyRecord:
    window: SampleWindow
    frequencies: dict
    sigma: float
    denominator: int

    def __getitem__(self, residues) -> float:
        key = residues if isinstance(residues, PatternKey) else PatternKey(self.window.q, tuple(residues))
        return self.frequencies[key]


def binomial_precision(C: int) -> float:
    """Standard deviation scale 1/sqrt(C) of a frequency estimated from C primes."""
    if C < 1:
        raise InvalidParameterError("C must be >= 1")
    return 1.0 / math.sqrt(C)


def _frequencies(primes: np.ndarray, w: SampleWindow, raw_denominator: bool) -> FrequencyRecord:
    q, k = w.q, w.k
    res = (primes % q).astype(np.int64)
    coprime = np.gcd(res, q) == 1
    n_start = len(primes) - k + 1
    keys = all_patterns(q, k)
    if n_start <= 0:
        freqs = {key: 0.0 for key in keys}
        return FrequencyRecord(w, freqs, binomial_precision(w.C), 0)
    ok = np.ones(n_start, dtype=bool)
    code = np.zeros(n_start, dtype=np.int64)
    for i in range(k):
        ok &= coprime[i : i + n_start]
        code = code * q + res[i : i + n_start]
    tally = np.bincount(code[ok], minlength=q**k)
    denom = n_start if raw_denominator else int(ok.sum())
    freqs = {}
    for key in keys:
        c = 0
        for r in key.residues:
            c = c * q + r
        freqs[key] = float(tally[c]) / denom if denom else 0.0
    return FrequencyRecord(w, freqs, binomial_precision(w.C), denom)


def sample_window(
    w: SampleWindow, raw_denominator: bool = False, workers: int = 1, max_span: int = 2**40
) -> FrequencyRecord:
    """Pattern frequencies among the first C primes above X.

    A pattern is counted at each of the C - k + 1 starting positions whose k
    primes all lie in the sample. By default primes sharing a factor with q
    drop out of numerator and denominator alike, so the frequencies sum to 1;
    ``raw_denominator`` divides by C - k + 1 instead.
    """
    primes = primes_after(w.X, w.C, workers, max_span)
    return _frequencies(primes, w, raw_denominator)


def coverage_window(
    X: int, width: int, q: int, k: int = 2, raw_denominator: bool = False, workers: int = 1
) -> FrequencyRecord:
    """Frequencies over every prime in [X, X + width)."""
    chunks = list(iter_prime_segments(X, X + width, workers))
    primes = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64)
    w = SampleWindow(X, max(len(primes), 1), q, k, full_coverage=True)
    return _frequencies(primes, w, raw_denominator)


def grid_points(b1: int) -> list[tuple[int, int]]:
    """(alpha, beta) for X = alpha * 10**beta, in canonical (beta, alpha) order."""
    if b1 < 1:
        raise InvalidParameterError("b1 must be >= 1")
    return [(alpha, beta) for beta in range(1, b1 + 1) for alpha in range(1, 10)]


def coverage_grid(b1: int, q: int, k: int = 2, workers: int = 1, raw_denominator: bool = False):
    """Full-coverage windows [alpha 10^beta, (alpha+1) 10^beta) over the whole grid."""
    return {
        (al, be): coverage_window(al * 10**be, 10**be, q, k, raw_denominator, workers)
        for al, be in grid_points(b1)
    }


def sampled_grid(b1: int, C: int, q: int, k: int = 2, workers: int = 1, raw_denominator: bool = False):
    """Windows of C primes starting at each grid point."""
    return {
        (al, be): sample_window(SampleWindow(al * 10**be, C, q, k), raw_denominator, workers)
        for al, be in grid_points(b1)
    }


# ---------------------------------------------------------------------------
# stitching


@dataclass(frozen=True)
class StitchedEstimate:
    b1: int
    q: int
    k: int
    values: dict
    denominator: str
    weights: dict = field(default_factory=dict, compare=False)

    def __getitem__(self, residues) -> float:
        key = residues if isinstance(residues, PatternKey) else PatternKey(self.q, tuple(residues))
        return self.values[key]


def li_weight(alpha: int, beta: int) -> float:
    return li((alpha + 1) * 10**beta) - li(alpha * 10**beta)


def stitch_denominator(b1: int, mode: str = "printed") -> float:
    if mode == "printed":
        return li(9 * 10**b1)
    if mode == "telescoped":
        return li(10 ** (b1 + 1)) - li(10)
    raise InvalidParameterError(f"denominator mode must be one of {DENOMINATORS}")


def _index_grid(records) -> dict:
    if isinstance(records, Mapping):
        return dict(records)
    out = {}
    for rec in records:
        X = rec.window.X
        beta = len(str(X)) - 1
        alpha, rem = divmod(X, 10**beta)
        if rem or not 1 <= alpha <= 9:
            raise InvalidParameterError(f"window start {X} is not of the form alpha * 10**beta")
        out[(alpha, beta)] = rec
    return out


def stitch(records, b1: int, denominator: str = "printed") -> StitchedEstimate:
    """sum_{beta, alpha} f(alpha 10^beta) [li((alpha+1) 10^beta) - li(alpha 10^beta)] / den.

    ``den`` is li(9 * 10**b1) by default; ``telescoped`` uses
    li(10**(b1+1)) - li(10), the total weight of the grid.
    """
    grid = _index_grid(records)
    missing = [pt for pt in grid_points(b1) if pt not in grid]
    if missing:
        listed = ", ".join(f"{a}e{b}" for a, b in missing)
        raise MissingWindowError(f"grid incomplete for b1={b1}; missing windows at X = {listed}")
    den = stitch_denominator(b1, denominator)
    first = grid[(1, 1)]
    q, k = first.window.q, first.window.k
    weights = {pt: li_weight(*pt) for pt in grid_points(b1)}
    values = {}
    for key in all_patterns(q, k):
        terms = [grid[pt].frequencies.get(key, 0.0) * weights[pt] for pt in grid_points(b1)]
        values[key] = math.fsum(terms) / den
    return StitchedEstimate(b1, q, k, values, denominator, weights)


# ---------------------------------------------------------------------------
# CSV


def _fmt(v: float) -> str:
    return format(v, ".17g")


def write_records(records: Iterable[FrequencyRecord], path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["X", "C", "q", "k", "pattern", "frequency", "sigma"])
            for rec in records:
                w = rec.window
                for key in sorted(rec.frequencies):
                    wr.writerow([w.X, w.C, w.q, w.k, key.label, _fmt(rec.frequencies[key]), _fmt(rec.sigma)])
    except OSError as exc:
        raise TableIOError(f"cannot write {path}: {exc}") from exc


def read_records(paths) -> list[FrequencyRecord]:
    """Records from one CSV file, a directory of them, or a list of files."""
    if isinstance(paths, (str, Path)):
        p = Path(paths)
        paths = sorted(p.glob("*.csv")) if p.is_dir() else [p]
    groups: dict = {}
    for path in paths:
        try:
            with open(path, newline="") as fh:
                for row in csv.DictReader(fh):
                    w = (int(row["X"]), int(row["C"]), int(row["q"]), int(row["k"]))
                    g = groups.setdefault(w, {"sigma": float(row["sigma"]), "f": {}})
                    key = PatternKey.parse(w[2], row["pattern"])
                    g["f"][key] = float(row["frequency"])
        except OSError as exc:
            raise TableIOError(f"cannot read {path}: {exc}") from exc
    if not groups:
        raise EmptyInputError("no window records found")
    out = []
    for (X, C, q, k), g in sorted(groups.items()):
        out.append(FrequencyRecord(SampleWindow(X, C, q, k), g["f"], g["sigma"], C))
    return out


def write_stitched(est: StitchedEstimate, path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["b1", "q", "pattern", "estimate"])
            for key in sorted(est.values):
                wr.writerow([est.b1, est.q, key.label, _fmt(est.values[key])])
    except OSError as exc:
        raise TableIOError(f"cannot write {path}: {exc}") from exc
