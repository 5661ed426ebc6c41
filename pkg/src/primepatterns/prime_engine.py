"""Prime generation, consecutive-prime pattern counts, li(x) and gap statistics.

Primes come from an odd-only segmented sieve of Eratosthenes built on numpy.
Segments are independent, so they can be sieved in worker processes; every
consumer walks them in ascending order, which keeps all counts identical for
any worker count.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from collections.abc import Iterator, Sequence

import numpy as np

from .errors import BudgetError, DomainError, InvalidParameterError, TableIOError
from .quadrature import integrate_panels

SEGMENT_SIZE = 2**26
MAX_SEGMENT_SPAN = 2**26
MAX_K = 4


# ---------------------------------------------------------------------------
# sieving


@lru_cache(maxsize=8)
def small_primes(limit: int) -> np.ndarray:
    """All primes ``<= limit`` as an int64 array (plain sieve)."""
    if limit < 2:
        return np.zeros(0, dtype=np.int64)
    is_prime = np.ones(limit + 1, dtype=bool)
    is_prime[:2] = False
    is_prime[4::2] = False
    for p in range(3, math.isqrt(limit) + 1, 2):
        if is_prime[p]:
            is_prime[p * p :: 2 * p] = False
    out = np.flatnonzero(is_prime).astype(np.int64)
    out.setflags(write=False)
    return out


def _sieve_range(lo: int, hi: int, base: np.ndarray) -> np.ndarray:
    """Primes in ``[lo, hi)``; ``base`` must contain every prime <= sqrt(hi)."""
    lo = max(lo, 2)
    if hi <= lo:
        return np.zeros(0, dtype=np.int64)
    head = [2] if lo <= 2 < hi else []
    first_odd = lo | 1
    if first_odd >= hi:
        return np.array(head, dtype=np.int64)
    n_odd = (hi - first_odd + 1) // 2
    mask = np.ones(n_odd, dtype=bool)
    if first_odd == 1:
        mask[0] = False
    for p in base[1:]:
        p = int(p)
        pp = p * p
        if pp >= hi:
            break
        start = max(pp, -(-first_odd // p) * p)
        if start % 2 == 0:
            start += p
        if start >= hi:
            continue
        mask[(start - first_odd) // 2 :: p] = False
    odd = first_odd + 2 * np.flatnonzero(mask).astype(np.int64)
    if head:
        return np.concatenate([np.array(head, dtype=np.int64), odd])
    return odd


def sieve_segment(lo: int, hi: int, max_span: int = MAX_SEGMENT_SPAN) -> np.ndarray:
    """Primes in ``[lo, hi)`` in ascending order.

    >>> sieve_segment(20, 30).tolist()
    [23, 29]
    """
    lo = max(int(lo), 2)
    hi = int(hi)
    if hi <= lo:
        raise InvalidParameterError(f"empty range [{lo}, {hi})")
    if hi - lo > max_span:
        raise BudgetError(
            f"range length {hi - lo} exceeds the segment limit max_span={max_span}"
        )
    return _sieve_range(lo, hi, small_primes(math.isqrt(hi) + 1))


def _segment_task(task: tuple[int, int, int]) -> np.ndarray:
    lo, hi, base_limit = task
    return _sieve_range(lo, hi, small_primes(base_limit))


def _segment_bounds(lo: int, hi: int, size: int) -> list[tuple[int, int]]:
    out = []
    start = lo
    while start < hi:
        end = min(start + size, hi)
        out.append((start, end))
        start = end
    return out


def iter_prime_segments(
    lo: int,
    hi: int,
    workers: int = 1,
    segment_size: int = SEGMENT_SIZE,
    breaks: Sequence[int] = (),
) -> Iterator[np.ndarray]:
    """Yield the primes of ``[lo, hi)`` segment by segment, ascending.

    ``breaks`` adds extra segment boundaries. With ``workers > 1`` segments
    are sieved in a process pool but still yielded in order.
    """
    if workers < 1:
        raise InvalidParameterError("workers must be >= 1")
    cuts = sorted({b for b in breaks if lo < b < hi} | {lo, hi})
    bounds: list[tuple[int, int]] = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        bounds.extend(_segment_bounds(a, b, segment_size))
    base_limit = math.isqrt(max(hi, 4)) + 1
    tasks = [(a, b, base_limit) for a, b in bounds]
    if workers == 1 or len(tasks) <= 1:
        for t in tasks:
            yield _segment_task(t)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # Bounded look-ahead keeps memory flat on long runs.
        window = 2 * workers
        pending = [pool.submit(_segment_task, t) for t in tasks[:window]]
        nxt = window
        while pending:
            fut = pending.pop(0)
            if nxt < len(tasks):
                pending.append(pool.submit(_segment_task, tasks[nxt]))
                nxt += 1
            yield fut.result()


def nth_prime_upper_bound(n: int) -> int:
    """An integer >= p_n (Rosser-Schoenfeld style bound, padded)."""
    if n < 6:
        return 13
    ln = math.log(n)
    return int(n * (ln + math.log(ln))) + 10


def first_primes(n: int, workers: int = 1) -> np.ndarray:
    """The first ``n`` primes."""
    if n < 1:
        return np.zeros(0, dtype=np.int64)
    chunks = []
    got = 0
    for seg in iter_prime_segments(2, nth_prime_upper_bound(n) + 1, workers):
        chunks.append(seg)
        got += len(seg)
        if got >= n:
            break
    return np.concatenate(chunks)[:n]


def primes_after(x: int, count: int, workers: int = 1, max_span: int = 2**40) -> np.ndarray:
    """The first ``count`` primes strictly greater than ``x``."""
    x = int(x)
    lo = x + 1
    logx = math.log(max(x, 3))
    # Generous span estimate; the loop below extends it if ever needed.
    span = int(count * logx * 1.15 + 40 * logx + 1000)
    if span > max_span:
        raise BudgetError(
            f"need a sieve span of about {span} above {x}, over the limit {max_span}"
        )
    chunks, got = [], 0
    hi = lo + span
    while got < count:
        for seg in iter_prime_segments(lo, hi, workers):
            chunks.append(seg)
            got += len(seg)
            if got >= count:
                break
        lo, hi = hi, hi + max(span // 4, 1000)
    return np.concatenate(chunks)[:count]


# ---------------------------------------------------------------------------
# pattern counting


@dataclass(frozen=True, order=True)
class PatternKey:
    q: int
    residues: tuple[int, ...]

    def __post_init__(self):
        if self.q < 3:
            raise InvalidParameterError(f"modulus q={self.q} must be >= 3")
        if not 1 <= len(self.residues) <= MAX_K:
            raise InvalidParameterError("pattern length must be in [1, 4]")
        for r in self.residues:
            if not 1 <= r < self.q or math.gcd(r, self.q) != 1:
                raise InvalidParameterError(f"residue {r} is not reduced mod {self.q}")

    @property
    def label(self) -> str:
        return "-".join(str(r) for r in self.residues)

    @classmethod
    def parse(cls, q: int, label: str) -> "PatternKey":
        return cls(q, tuple(int(s) for s in label.split("-")))


@dataclass(frozen=True)
class PatternCounts:
    """Exact tallies of k-patterns of consecutive primes mod q.

    ``limit_type`` is ``"x"`` (starting prime <= limit) or ``"first"``
    (starting index <= limit).
    """

    limit_type: str
    limit: int
    q: int
    k: int
    counts: dict = field(hash=False)
    total_pairs: int = 0

    def __getitem__(self, residues) -> int:
        if isinstance(residues, PatternKey):
            residues = residues.residues
        return self.counts.get(PatternKey(self.q, tuple(residues)), 0)

    def ratio(self, residues) -> float:
        return self[residues] / self.total_pairs

    def to_rows(self) -> list[tuple]:
        return [
            (self.limit_type, self.limit, self.q, self.k, key.label, n)
            for key, n in sorted(self.counts.items())
        ]


def reduced_residues(q: int) -> list[int]:
    return [a for a in range(1, q) if math.gcd(a, q) == 1]


def all_patterns(q: int, k: int) -> list[PatternKey]:
    res = reduced_residues(q)
    keys = [()]
    for _ in range(k):
        keys = [t + (r,) for t in keys for r in res]
    return [PatternKey(q, t) for t in keys]


def _check_qk(q: int, k: int) -> None:
    if q < 3:
        raise InvalidParameterError(f"modulus q={q} must be >= 3")
    if not 1 <= k <= MAX_K:
        raise InvalidParameterError(f"pattern length k={k} must be in [1, {MAX_K}]")


class _PatternTally:
    """Streaming tally over ascending primes, bucketed by checkpoint.

    Every prime gets a bucket: the index of the first checkpoint that admits
    it as a starting prime, or ``n_buckets`` when none does. A window of k
    consecutive primes is tallied in the bucket of its first prime.
    """

    def __init__(self, q: int, k: int, n_buckets: int):
        self.q, self.k, self.nb = q, k, n_buckets
        self.coprime = np.array([math.gcd(r, q) == 1 for r in range(q)], dtype=bool)
        self.weights = q ** np.arange(k - 1, -1, -1, dtype=np.int64)
        self.size = q**k
        self.table = np.zeros((n_buckets, self.size), dtype=np.int64)
        self.buf_res = np.zeros(0, dtype=np.int64)
        self.buf_bucket = np.zeros(0, dtype=np.int64)

    def feed(self, primes: np.ndarray, buckets: np.ndarray) -> None:
        res = np.concatenate([self.buf_res, primes % self.q])
        bkt = np.concatenate([self.buf_bucket, buckets])
        n_win = len(res) - self.k + 1
        if n_win > 0:
            ok = bkt[:n_win] < self.nb
            code = np.zeros(n_win, dtype=np.int64)
            for j in range(self.k):
                part = res[j : j + n_win]
                ok &= self.coprime[part]
                code += part * self.weights[j]
            flat = bkt[:n_win][ok] * self.size + code[ok]
            self.table += np.bincount(flat, minlength=self.nb * self.size).reshape(
                self.nb, self.size
            )
        keep = self.k - 1
        self.buf_res = res[len(res) - keep :] if keep else res[:0]
        self.buf_bucket = bkt[len(bkt) - keep :] if keep else bkt[:0]

    def pending(self) -> bool:
        """True while some admitted start still lacks its look-ahead primes."""
        return bool(np.any(self.buf_bucket < self.nb))

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.table, axis=0)


def _decode(code: int, q: int, k: int) -> tuple[int, ...]:
    digits = []
    for _ in range(k):
        digits.append(code % q)
        code //= q
    return tuple(reversed(digits))


def _to_counts(limit_type, limit, q, k, row: np.ndarray) -> PatternCounts:
    counts = {}
    for key in all_patterns(q, k):
        code = 0
        for r in key.residues:
            code = code * q + r
        counts[key] = int(row[code])
    return PatternCounts(limit_type, int(limit), q, k, counts, int(row.sum()))


def count_patterns_at(
    q: int,
    k: int,
    x: Sequence[int] | None = None,
    first: Sequence[int] | None = None,
    workers: int = 1,
    segment_size: int = SEGMENT_SIZE,
) -> list[PatternCounts]:
    """Pattern counts at several limits from one pass over the primes.

    Give ascending ``x`` limits (count starts with p_n <= x) or ``first``
    limits (count starts with n <= N), not both.
    """
    _check_qk(q, k)
    if (x is None) == (first is None):
        raise InvalidParameterError("give exactly one of x limits or first-N limits")
    limits = [int(v) for v in (x if x is not None else first)]
    if not limits or any(v < 1 for v in limits):
        raise InvalidParameterError("limits must be positive")
    if any(b < a for a, b in zip(limits, limits[1:])):
        raise InvalidParameterError("limits must be ascending")
    if q**k > 2**24:
        raise BudgetError(f"q**k = {q**k} pattern cells exceed the 2**24 tally budget")
    checkpoints = np.array(limits, dtype=np.int64)
    nb = len(limits)
    tally = _PatternTally(q, k, nb)

    if x is not None:
        top = limits[-1]
        for seg in iter_prime_segments(2, top + 1, workers, segment_size, breaks=limits):
            tally.feed(seg, np.searchsorted(checkpoints, seg, side="left"))
        lo = top + 1
        while tally.pending():
            seg = _sieve_range(lo, lo + 4096, small_primes(math.isqrt(lo + 4096) + 1))
            tally.feed(seg, np.full(len(seg), nb, dtype=np.int64))
            lo += 4096
        limit_type = "x"
    else:
        need = limits[-1] + k - 1
        seen = 0
        for seg in iter_prime_segments(2, nth_prime_upper_bound(need) + 1, workers, segment_size):
            idx = np.arange(seen + 1, seen + 1 + len(seg), dtype=np.int64)
            tally.feed(seg, np.searchsorted(checkpoints, idx, side="left"))
            seen += len(seg)
            if seen >= need:
                break
        limit_type = "first"
    if tally.pending():
        raise RuntimeError("sieve ended before all look-ahead primes were seen")

    cum = tally.cumulative()
    return [_to_counts(limit_type, lim, q, k, cum[i]) for i, lim in enumerate(limits)]


def count_patterns(
    q: int,
    k: int,
    x: int | None = None,
    first: int | None = None,
    workers: int = 1,
    segment_size: int = SEGMENT_SIZE,
) -> PatternCounts:
    """Count k-patterns of consecutive primes mod q.

    ``counts[a]`` is the number of n with p_n within the limit and
    p_{n+i-1} = a_i (mod q); look-ahead primes may exceed the limit. Windows
    touching a prime that divides q are skipped entirely.

    >>> c = count_patterns(3, 2, x=50)
    >>> c[(2, 1)], c.total_pairs
    (5, 13)
    """
    return count_patterns_at(
        q,
        k,
        x=None if x is None else [x],
        first=None if first is None else [first],
        workers=workers,
        segment_size=segment_size,
    )[0]


def prime_counts_at(xs: Sequence[int], workers: int = 1) -> list[int]:
    """pi(x) for each ascending x in ``xs``."""
    xs = [int(v) for v in xs]
    out = np.zeros(len(xs), dtype=np.int64)
    cps = np.array(xs, dtype=np.int64)
    for seg in iter_prime_segments(2, xs[-1] + 1, workers, breaks=xs):
        out += np.bincount(np.searchsorted(cps, seg, side="left"), minlength=len(xs) + 1)[: len(xs)]
    return np.cumsum(out).tolist()


# ---------------------------------------------------------------------------
# logarithmic integral


@dataclass(frozen=True)
class LiValue:
    x: float
    value: float
    error: float = 0.0


LI_REL_TOL = 1e-13


def _li_integrand(u: float) -> float:
    return math.exp(u) / u


@lru_cache(maxsize=4096)
def li(x: float) -> float:
    """li(x) = integral of dt/log t from 2 to x."""
    return log_integral(x).value


def log_integral(x: float) -> LiValue:
    """Adaptive quadrature of dt/log t over [2, x], in the variable u = log t."""
    x = float(x)
    if not x >= 2.0:
        raise DomainError(f"li(x) needs x >= 2, got {x}")
    if x == 2.0:
        return LiValue(x, 0.0, 0.0)
    u0, u1 = math.log(2.0), math.log(x)
    edges = [u0]
    step = 0.5
    u = math.floor(u0 / step) * step + step
    while u < u1:
        edges.append(u)
        u += step
    edges.append(u1)
    value, err = integrate_panels(_li_integrand, edges, LI_REL_TOL)
    return LiValue(x, value, err)


# ---------------------------------------------------------------------------
# gaps


@dataclass(frozen=True)
class GapRecord:
    n: int
    p_n: int
    gap: int


def gap_records(n: int, workers: int = 1) -> list[GapRecord]:
    ps = first_primes(n + 1, workers)
    return [GapRecord(i + 1, int(ps[i]), int(ps[i + 1] - ps[i])) for i in range(n)]


def gap_exceedance(N: int, c: float, workers: int = 1) -> float:
    """Fraction of n <= N whose gap p_{n+1} - p_n exceeds c * loglog(p_N) * log(p_n)."""
    if N < 100:
        raise InvalidParameterError("N must be >= 100")
    if c < 0:
        raise InvalidParameterError("c must be >= 0")
    ps = first_primes(N + 1, workers)
    gaps = np.diff(ps)
    p = ps[:-1].astype(np.float64)
    threshold = c * math.log(math.log(float(ps[N - 1]))) * np.log(p)
    return float(np.count_nonzero(gaps > threshold)) / N


# ---------------------------------------------------------------------------
# CSV

COUNT_HEADER = ["limit_type", "limit", "q", "k", "pattern", "count"]


def write_counts(results: Sequence[PatternCounts], path) -> None:
    """Write tallies as ``limit_type,limit,q,k,pattern,count`` rows."""
    try:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(COUNT_HEADER)
            for pc in results:
                wr.writerows(pc.to_rows())
    except OSError as exc:
        raise TableIOError(f"cannot write {path}: {exc}") from exc


def read_counts(path) -> list[PatternCounts]:
    """Inverse of ``write_counts``; ``total_pairs`` is rebuilt as the sum of counts."""
    groups: dict = {}
    try:
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                key = (row["limit_type"], int(row["limit"]), int(row["q"]), int(row["k"]))
                groups.setdefault(key, {})[PatternKey.parse(key[2], row["pattern"])] = int(row["count"])
    except OSError as exc:
        raise TableIOError(f"cannot read {path}: {exc}") from exc
    return [
        PatternCounts(lt, lim, q, k, counts, sum(counts.values()))
        for (lt, lim, q, k), counts in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1]))
    ]
