"""Hardy-Littlewood singular series and their inclusion-exclusion forms.

``singular_series`` evaluates the Euler product over primes not dividing q.
Primes up to ``P = max(100, diameter)`` are multiplied directly; beyond P
every prime separates the elements of the set, so each remaining factor
depends only on the set size k. Its logarithm expands as

    log((1 - k/p) / (1 - 1/p)**k) = -sum_{m>=2} (k**m - k) / (m p**m)

and the sums over primes p > P are taken from the prime zeta function.
The expansion is cut once the analytic remainder is below the target.
"""

from __future__ import annotations

import datetime as _dt
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from collections.abc import Iterable, Sequence

import mpmath
import numpy as np

from .errors import BudgetError, CacheMissError, InvalidParameterError, TableIOError
from .prime_engine import small_primes

DEFAULT_TARGET = 1e-9
MIN_CUTOFF = 100
MAX_SET_SIZE = 7
DEFAULT_MAX_ELEM = 150
EPS = 2.0**-52
TABLE_ENV = "PRIMEPATTERNS_TABLE_DIR"


# ---------------------------------------------------------------------------
# sets


@dataclass(frozen=True, order=True)
class TupleSet:
    """A finite set of non-negative integers kept as a sorted tuple."""

    elements: tuple[int, ...]

    def __init__(self, elements: Iterable[int] = (), max_elem: int | None = None):
        elems = tuple(sorted(int(e) for e in elements))
        if len(set(elems)) != len(elems):
            raise InvalidParameterError(f"repeated elements in {elems}")
        if elems and elems[0] < 0:
            raise InvalidParameterError("elements must be non-negative")
        if len(elems) > MAX_SET_SIZE:
            raise InvalidParameterError(f"set size {len(elems)} exceeds {MAX_SET_SIZE}")
        if max_elem is not None and elems and elems[-1] > max_elem:
            raise InvalidParameterError(f"element {elems[-1]} exceeds max_elem={max_elem}")
        object.__setattr__(self, "elements", elems)

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    @property
    def diameter(self) -> int:
        return self.elements[-1] - self.elements[0] if self.elements else 0

    def canonical(self) -> "TupleSet":
        return TupleSet(canonical(self.elements))


def canonical(elements: Iterable[int]) -> tuple[int, ...]:
    """Translate a set so its minimum is 0."""
    elems = sorted(int(e) for e in elements)
    if not elems:
        return ()
    m = elems[0]
    return tuple(e - m for e in elems)


def _as_tuple(H) -> tuple[int, ...]:
    if isinstance(H, TupleSet):
        return H.elements
    elems = tuple(sorted(int(e) for e in H))
    if len(set(elems)) != len(elems):
        raise InvalidParameterError(f"repeated elements in {elems}")
    return elems


# ---------------------------------------------------------------------------
# local factors


def _is_prime(p: int) -> bool:
    if p < 2:
        return False
    if p % 2 == 0:
        return p == 2
    return all(p % d for d in range(3, math.isqrt(p) + 1, 2))


def residue_count(H, p: int) -> int:
    """Number of residue classes mod p met by the elements of H.

    >>> residue_count((0, 2, 6), 3)
    2
    """
    if not _is_prime(p):
        raise InvalidParameterError(f"{p} is not prime")
    elems = _as_tuple(H)
    if not elems:
        raise InvalidParameterError("residue_count needs a non-empty set")
    return len({e % p for e in elems})


@lru_cache(maxsize=None)
def _primes_upto(P: int) -> tuple[int, ...]:
    return tuple(int(p) for p in small_primes(P))


@lru_cache(maxsize=None)
def _prime_power_tail(P: int, m: int) -> float:
    """Sum of p**-m over primes p > P."""
    dps = 30 + int(m * math.log10(P)) + 10
    with mpmath.workdps(dps):
        head = mpmath.fsum(mpmath.mpf(p) ** -m for p in _primes_upto(P))
        return float(mpmath.primezeta(m) - head)


@lru_cache(maxsize=None)
def tail_log_factor(k: int, P: int, q: int = 1, target: float = DEFAULT_TARGET) -> tuple[float, float]:
    """``(L, bound)`` with L = sum over primes p > P, p not dividing q, of log f_k(p).

    ``bound`` limits |true L - L| from the dropped terms of the expansion.
    """
    if k < 2:
        return 0.0, 0.0
    if P < 2 * k:
        raise InvalidParameterError("prime cutoff too small for the tail expansion")
    ratio = k / P
    terms = []
    m = 2
    while True:
        s_m = _prime_power_tail(P, m)
        terms.append(-(k**m - k) / m * s_m)
        # Remainder after m: sum_{j>m} k^j P^{1-j} / (j (j-1)).
        rem = P * ratio ** (m + 1) / ((m + 1) * m) / (1.0 - ratio)
        if rem <= 0.25 * target or m >= 200:
            break
        m += 1
    big = [p for p in _prime_factors(q) if p > P]
    for p in big:
        terms.append(-(math.log1p(-k / p) - k * math.log1p(-1.0 / p)))
    return math.fsum(terms), rem


def _prime_factors(n: int) -> list[int]:
    out, d = [], 2
    while d * d <= n:
        if n % d == 0:
            out.append(d)
            while n % d == 0:
                n //= d
        d += 1
    if n > 1:
        out.append(n)
    return out


# ---------------------------------------------------------------------------
# values


@dataclass(frozen=True)
class SeriesValue:
    set: tuple[int, ...]
    q: int
    kind: str
    value: float
    prime_cutoff: int
    tail_bound: float


def _cutoff_for(elems: Sequence[int], prime_cutoff: int | None) -> int:
    diam = elems[-1] - elems[0] if elems else 0
    P = max(MIN_CUTOFF, diam)
    if prime_cutoff is not None:
        P = max(P, int(prime_cutoff))
    return P


@lru_cache(maxsize=1 << 20)
def _plain(elems: tuple[int, ...], q: int, target: float, P: int) -> tuple[float, float, int]:
    k = len(elems)
    if k <= 1:
        return 1.0, 0.0, 0
    primes = _primes_upto(P)
    prod = 1.0
    n_factors = 0
    for p in primes:
        if q % p == 0:
            continue
        nu = len({e % p for e in elems})
        if nu == p:
            return 0.0, 0.0, primes[-1]
        prod *= (1.0 - nu / p) / (1.0 - 1.0 / p) ** k
        n_factors += 1
    L, rem = tail_log_factor(k, P, q, target)
    value = prod * math.exp(L)
    # Relative bound: dropped expansion terms plus float rounding.
    bound = math.expm1(rem) + 4 * EPS * (n_factors + 8)
    return value, bound, primes[-1]


def singular_series(
    H,
    q: int = 1,
    cutoff_target: float = DEFAULT_TARGET,
    prime_cutoff: int | None = None,
) -> SeriesValue:
    """S_q(H): the singular series over primes not dividing q (q=1 gives S(H)).

    >>> round(singular_series((0, 2)).value, 7)
    1.3203236
    """
    if not cutoff_target > 0:
        raise InvalidParameterError("cutoff_target must be positive")
    if q < 1:
        raise InvalidParameterError("q must be >= 1")
    elems = canonical(_as_tuple(H))
    if len(elems) > MAX_SET_SIZE:
        raise BudgetError(f"set size {len(elems)} exceeds {MAX_SET_SIZE}")
    P = _cutoff_for(elems, prime_cutoff)
    value, bound, cut = _plain(elems, q, cutoff_target, P)
    return SeriesValue(elems, q, "plain", value, cut, bound)


def zeroed_series(
    H,
    q: int = 1,
    cutoff_target: float = DEFAULT_TARGET,
    prime_cutoff: int | None = None,
) -> SeriesValue:
    """S_{q,0}(H) = sum over T subset of H of (-1)^{|H - T|} S_q(T)."""
    elems = canonical(_as_tuple(H))
    k = len(elems)
    if k > MAX_SET_SIZE:
        raise BudgetError(
            f"zeroed series of a {k}-element set needs 2**{k} terms; the budget is 2**{MAX_SET_SIZE}"
        )
    if not cutoff_target > 0:
        raise InvalidParameterError("cutoff_target must be positive")
    value, bound, cut = _zeroed(elems, q, cutoff_target, prime_cutoff)
    return SeriesValue(elems, q, "zeroed", value, cut, bound)


@lru_cache(maxsize=1 << 20)
def _zeroed(elems, q, target, prime_cutoff):
    k = len(elems)
    if k == 0:
        return 1.0, 0.0, 0
    if k == 1:
        return 0.0, 0.0, 0
    terms, bounds, cut = [], [], 0
    for r in range(k + 1):
        sign = -1.0 if (k - r) % 2 else 1.0
        for sub in itertools.combinations(elems, r):
            sub_c = canonical(sub)
            v, b, c = _plain(sub_c, q, target, _cutoff_for(sub_c, prime_cutoff))
            terms.append(sign * v)
            bounds.append(abs(v) * b)
            cut = max(cut, c)
    # fsum is correctly rounded, so the result ignores the order of the terms.
    return math.fsum(terms), math.fsum(bounds), cut


# ---------------------------------------------------------------------------
# tables


def table_dir(path: str | os.PathLike | None = None) -> Path:
    """Resolve the table cache directory: argument, then env var, then default."""
    if path is None:
        path = os.environ.get(TABLE_ENV) or Path.home() / ".cache" / "primepatterns"
    return Path(path)


@dataclass
class SeriesTable:
    """Zeroed singular series keyed by canonical (min 0) sets."""

    q: int
    max_size: int
    max_elem: int
    entries: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def lookup(self, H) -> SeriesValue:
        elems = canonical(_as_tuple(H))
        try:
            return self.entries[elems]
        except KeyError:
            raise CacheMissError(
                f"set {list(elems)} (q={self.q}) is not in the table "
                f"(max_size={self.max_size}, max_elem={self.max_elem})"
            ) from None

    def value(self, H) -> float:
        return self.lookup(H).value

    def __contains__(self, H) -> bool:
        return canonical(_as_tuple(H)) in self.entries

    def __len__(self):
        return len(self.entries)

    def covers(self, size: int, max_elem: int) -> bool:
        return size <= self.max_size and max_elem <= self.max_elem

    # -- persistence -------------------------------------------------------

    def filename(self) -> str:
        return f"series_q{self.q}_s{self.max_size}_e{self.max_elem}.jsonl"

    def dump_lines(self) -> Iterable[str]:
        for elems in sorted(self.entries, key=lambda t: (len(t), t)):
            sv = self.entries[elems]
            yield json.dumps(
                {
                    "q": self.q,
                    "set": list(elems),
                    "value": format(sv.value, ".17g"),
                    "prime_cutoff": sv.prime_cutoff,
                    "tail_bound": format(sv.tail_bound, ".17g"),
                },
                separators=(",", ":"),
            )

    def save(self, directory) -> Path:
        directory = Path(directory)
        path = directory / self.filename()
        try:
            directory.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            with open(tmp, "w") as fh:
                for line in self.dump_lines():
                    fh.write(line + "\n")
            os.replace(tmp, path)
            meta = path.with_suffix(".meta.json")
            meta.write_text(json.dumps(self.provenance, indent=1, sort_keys=True) + "\n")
        except OSError as exc:
            raise TableIOError(f"cannot write table to {directory}: {exc}") from exc
        return path

    @classmethod
    def load(cls, path) -> "SeriesTable":
        path = Path(path)
        try:
            lines = path.read_text().splitlines()
        except OSError as exc:
            raise TableIOError(f"cannot read table {path}: {exc}") from exc
        entries, q, max_size, max_elem = {}, None, 0, 0
        for line in lines:
            if not line.strip():
                continue
            rec = json.loads(line)
            elems = tuple(rec["set"])
            q = rec["q"]
            entries[elems] = SeriesValue(
                elems, q, "zeroed", float(rec["value"]), rec["prime_cutoff"], float(rec["tail_bound"])
            )
            max_size = max(max_size, len(elems))
            max_elem = max(max_elem, elems[-1] if elems else 0)
        meta_path = path.with_suffix(".meta.json")
        prov = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        max_size = prov.get("max_size", max_size)
        max_elem = prov.get("max_elem", max_elem)
        return cls(q if q is not None else prov.get("q", 1), max_size, max_elem, entries, prov)


def canonical_sets(max_size: int, max_elem: int) -> Iterable[tuple[int, ...]]:
    """All sets with minimum 0 (plus the empty set), by size then lexicographically."""
    yield ()
    for size in range(1, max_size + 1):
        for rest in itertools.combinations(range(1, max_elem + 1), size - 1):
            yield (0,) + rest


def _table_chunk(args):
    q, size, second, max_elem, target = args
    out = []
    if size == 0:
        sets = [()]
    elif size == 1:
        sets = [(0,)]
    else:
        sets = (
            (0, second) + rest
            for rest in itertools.combinations(range(second + 1, max_elem + 1), size - 2)
        )
    for elems in sets:
        v, b, c = _zeroed(elems, q, target, None)
        out.append((elems, v, b, c))
    return out


def compute_table(
    q: int,
    max_size: int = 5,
    max_elem: int = DEFAULT_MAX_ELEM,
    cutoff_target: float = DEFAULT_TARGET,
    workers: int = 1,
) -> SeriesTable:
    """All S_{q,0} values for canonical sets with |H| <= max_size and max H <= max_elem."""
    if q < 1:
        raise InvalidParameterError("q must be >= 1")
    if not 0 <= max_size <= MAX_SET_SIZE:
        raise InvalidParameterError(f"max_size must be in [0, {MAX_SET_SIZE}]")
    if max_elem < 0:
        raise InvalidParameterError("max_elem must be >= 0")
    jobs = [(q, 0, 0, max_elem, cutoff_target)]
    if max_size >= 1:
        jobs.append((q, 1, 0, max_elem, cutoff_target))
    for size in range(2, max_size + 1):
        jobs.extend((q, size, s, max_elem, cutoff_target) for s in range(1, max_elem + 1))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_table_chunk, jobs, chunksize=4))
    else:
        chunks = [_table_chunk(j) for j in jobs]
    entries = {}
    for chunk in chunks:
        for elems, v, b, c in chunk:
            entries[elems] = SeriesValue(elems, q, "zeroed", v, c, b)
    prov = {
        "q": q,
        "max_size": max_size,
        "max_elem": max_elem,
        "cutoff_target": cutoff_target,
        "min_prime_cutoff": MIN_CUTOFF,
        "built": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    return SeriesTable(q, max_size, max_elem, entries, prov)


def build_table(
    q: int,
    max_size: int = 5,
    max_elem: int = DEFAULT_MAX_ELEM,
    directory=None,
    cutoff_target: float = DEFAULT_TARGET,
    workers: int = 1,
    persist: bool = True,
) -> SeriesTable:
    """Load the table for (q, max_size, max_elem) from the cache, building it if absent."""
    tbl_dir = table_dir(directory)
    probe = SeriesTable(q, max_size, max_elem)
    path = tbl_dir / probe.filename()
    if persist and path.exists():
        return SeriesTable.load(path)
    table = compute_table(q, max_size, max_elem, cutoff_target, workers)
    if persist:
        table.save(tbl_dir)
    return table


# ---------------------------------------------------------------------------
# averages of the zeroed series over subsets


def normal_moment(ell: int) -> int:
    """E[Z**ell] for a standard normal Z: 0 for odd ell, (ell-1)!! for even."""
    if ell % 2:
        return 0
    out = 1
    for j in range(ell - 1, 0, -2):
        out *= j
    return out


@dataclass(frozen=True)
class MSAverage:
    h: int
    ell: int
    q: int
    lhs: float
    model: float
    A: float
    prefactor: float = 1.0


@lru_cache(maxsize=None)
def _diameter_sums(ell: int, q: int, max_d: int) -> tuple[float, ...]:
    """G[d] = sum of S_{q,0}(K) over canonical ell-sets K of diameter d."""
    G = [0.0] * (max_d + 1)
    if ell == 0:
        return tuple(G)
    if ell == 1:
        return tuple(G)  # S_{q,0} of a singleton vanishes
    for d in range(1, max_d + 1):
        vals = [
            _zeroed((0,) + mid + (d,), q, DEFAULT_TARGET, None)[0]
            for mid in itertools.combinations(range(1, d), ell - 2)
        ]
        G[d] = math.fsum(vals)
    return tuple(G)


def zeroed_subset_sum(h: int, ell: int, q: int = 1) -> float:
    """Sum of S_{q,0}(T) over all T subset of [1, h] with |T| = ell.

    A canonical set of diameter d has h - d translates inside [1, h], so the
    sum runs over canonical sets only.
    """
    if ell == 0:
        return 1.0
    if ell > h:
        return 0.0
    G = _diameter_sums(ell, q, h - 1)
    return math.fsum((h - d) * G[d] for d in range(h))


ENUMERATION_BUDGET = 10**7


def ms_average(h: int, ell: int, q: int = 1, A: float = -0.5, prefactor: float = 1.0) -> MSAverage:
    """Exact sum of S_{q,0} over ell-subsets of [1, h] next to the Gaussian-moment model.

    The model is prefactor * mu_ell / ell! * (-h log h + A h)**(ell/2).
    """
    if not 1 <= ell <= 4:
        raise InvalidParameterError("ell must be in [1, 4]")
    if h < ell:
        raise InvalidParameterError("need h >= ell")
    if math.comb(h, ell) > ENUMERATION_BUDGET:
        raise BudgetError(f"C({h}, {ell}) = {math.comb(h, ell)} exceeds the budget {ENUMERATION_BUDGET}")
    lhs = zeroed_subset_sum(h, ell, q)
    mu = normal_moment(ell)
    if mu == 0:
        model = 0.0
    else:
        base = -h * math.log(h) + A * h
        model = prefactor * mu / math.factorial(ell) * base ** (ell // 2)
    return MSAverage(h, ell, q, lhs, model, A, prefactor)


def fit_ms_constant(
    q: int = 1, hs: Sequence[int] = range(20, 61), fit_prefactor: bool = False
) -> tuple[float, float]:
    """Least-squares (A, prefactor) for the ell = 2 average over ``hs``.

    With ``fit_prefactor`` false the prefactor is pinned to 1 and the fit is
    one-parameter: 2*lhs + h log h = A h.
    """
    hs = list(hs)
    lhs = [zeroed_subset_sum(h, 2, q) for h in hs]
    if not fit_prefactor:
        num = math.fsum(h * (2 * v + h * math.log(h)) for h, v in zip(hs, lhs))
        den = math.fsum(h * h for h in hs)
        return num / den, 1.0
    X = np.array([[-h * math.log(h) / 2, h / 2] for h in hs])
    coef, *_ = np.linalg.lstsq(X, np.array(lhs), rcond=None)
    c, cA = coef
    return float(cA / c), float(c)
