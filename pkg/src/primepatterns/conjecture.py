"""Pair-pattern conjecture for pi(x; q, (a, b)).

The integrand needs, for every admissible gap h and interior size n,

    K(h, n) = sum over A subset {0, h}, T subset S_h, |T| = n of S_{q,0}(A | T)

with S_h = {t in [1, h-1] : gcd(t + a, q) = 1}. Summing the inclusion-exclusion
form over A leaves only the subsets that contain both 0 and h:

    sum_A S_{q,0}(A | T) = sum_{U subset T} (-1)^{|T - U|} S_q({0, h} | U),

so with F_j(h) = sum over j-subsets U of S_h of S_q({0, h} | U)

    K(h, n) = sum_j (-1)^{n-j} C(|S_h| - j, n - j) F_j(h).

F_j is found by a depth-first search over S_h that tracks residue occupancy
for every prime up to the cutoff and drops a branch as soon as some prime
has all of its residues hit (every superset then has S_q = 0).
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from itertools import combinations
from pathlib import Path

import numpy as np
from numba import njit

from .errors import BudgetError, CacheMissError, DomainError, InvalidParameterError
from .prime_engine import log_integral, small_primes
from .quadrature import integrate_panels
from .singular_series import (
    MIN_CUTOFF,
    SeriesTable,
    tail_log_factor,
)

KERNEL_TARGET = 1e-15
SUBSET_BUDGET = 10**7
MAX_NMAX = 5
NORMALIZATIONS = ("pnt", "printed")


def totient(q: int) -> int:
    return sum(1 for t in range(1, q + 1) if math.gcd(t, q) == 1)


def _check_residue(q: int, r: int, name: str) -> int:
    if math.gcd(r, q) != 1:
        raise InvalidParameterError(f"{name}={r} is not a reduced residue mod {q}")
    return r % q


# ---------------------------------------------------------------------------
# coefficients and parameters


@dataclass(frozen=True)
class Coefficients:
    y: float
    q: int
    alpha: float
    z: float
    g: float


def min_y(q: int) -> float:
    return max(math.e**2, math.exp(2 * q / totient(q)))


def coefficients(y: float, q: int) -> Coefficients:
    """alpha = 1 - q/(phi log y), z = q/(phi alpha log y), g = alpha**(phi/q)."""
    if q < 3:
        raise InvalidParameterError("q must be >= 3")
    if not y > min_y(q):
        raise DomainError(f"y={y} must exceed {min_y(q):.6g} so that alpha > 0")
    phi = totient(q)
    L = math.log(y)
    alpha = 1.0 - q / (phi * L)
    z = q / (phi * alpha * L)
    g = alpha ** (phi / q)
    return Coefficients(y, q, alpha, z, g)


@dataclass(frozen=True)
class ConjectureParams:
    q: int
    a: int
    b: int
    n_max: int = 5
    c: float = 4.0
    lower: float = 2.0
    panel_width: float = 0.5
    rel_tol: float = 1e-6
    epsilon: float | None = None  # override for epsilon_q
    # "pnt": endpoint weight (q/(phi log y))**2; "printed": z**2 = that / alpha**2
    normalization: str = "pnt"

    def __post_init__(self):
        if self.q < 3:
            raise InvalidParameterError("q must be >= 3")
        _check_residue(self.q, self.a, "a")
        _check_residue(self.q, self.b, "b")
        object.__setattr__(self, "a", self.a % self.q)
        object.__setattr__(self, "b", self.b % self.q)
        if not 0 <= self.n_max <= MAX_NMAX:
            raise InvalidParameterError(f"n_max must be in [0, {MAX_NMAX}]")
        if self.c < 1:
            raise InvalidParameterError("c must be >= 1")
        if not self.panel_width > 0 or not self.rel_tol > 0:
            raise InvalidParameterError("panel_width and rel_tol must be positive")
        if self.normalization not in NORMALIZATIONS:
            raise InvalidParameterError(f"normalization must be one of {NORMALIZATIONS}")

    @property
    def h0(self) -> int:
        return (self.b - self.a) % self.q or self.q

    def h_limit(self, y: float) -> int:
        """Largest admissible gap: floor(c * log log y * log y)."""
        L = math.log(y)
        return int(math.floor(self.c * math.log(L) * L))

    def gaps(self, y: float) -> list[int]:
        return list(range(self.h0, self.h_limit(y) + 1, self.q))


@dataclass(frozen=True)
class EpsilonQ:
    q: int
    a: int
    b: int
    h0: int
    count: int
    value: float


def epsilon_q(q: int, a: int, b: int) -> EpsilonQ:
    """#{0 < t < h0 : gcd(t + a, q) = 1} - phi(q) h0 / q with h0 = (b - a) mod q in [1, q]."""
    if q < 3:
        raise InvalidParameterError("q must be >= 3")
    a = _check_residue(q, a, "a")
    b = _check_residue(q, b, "b")
    h0 = (b - a) % q or q
    count = sum(1 for t in range(1, h0) if math.gcd(t + a, q) == 1)
    return EpsilonQ(q, a, b, h0, count, count - totient(q) * h0 / q)


# ---------------------------------------------------------------------------
# table-backed subset sums and the telescoping relations


@dataclass(frozen=True)
class SubsetSum:
    h: int
    ell: int
    kind: str
    value: float


_ADJOIN = {"A": lambda h: (), "B": lambda h: (0,), "C": lambda h: (h,), "D": lambda h: (0, h)}


def allowed_offsets(h: int, q: int, a: int | None) -> list[int]:
    """t in [1, h-1] with gcd(t + a, q) = 1; ``a=None`` drops the coprimality condition."""
    if a is None:
        return list(range(1, h))
    return [t for t in range(1, h) if math.gcd(t + a, q) == 1]


def subset_sum(kind: str, h: int, ell: int, q: int, a: int | None, table: SeriesTable) -> SubsetSum:
    """A, B, C or D sum over ell-subsets of the admissible offsets in [1, h-1]."""
    if kind not in _ADJOIN:
        raise InvalidParameterError(f"kind must be one of A, B, C, D (got {kind!r})")
    if ell < 0 or h < 0:
        return SubsetSum(h, ell, kind, 0.0)
    pool = allowed_offsets(h, q, a)
    if math.comb(max(h - 1, 0), ell) > SUBSET_BUDGET:
        raise BudgetError(f"C({h - 1}, {ell}) exceeds the budget {SUBSET_BUDGET}")
    extra = _ADJOIN[kind](h)
    vals = [table.value(extra + T) for T in combinations(pool, ell)]
    return SubsetSum(h, ell, kind, math.fsum(vals))


def _ss(kind, h, ell, q, a, table):
    return subset_sum(kind, h, ell, q, a, table).value


def lemma4_check(
    h: int, ell: int, q: int, a: int, table: SeriesTable, variant: str = "literal"
) -> float:
    """Largest discrepancy in the telescoping relations between A, B, C and D.

    ``literal`` checks, with the coprimality condition applied throughout,
        B(h-1, l-1) = C(h-1, l-1) = A(h, l) - A(h-1, l)
        D(h-1, l-2) = A(h, l) - 2 A(h-1, l) + A(h-2, l).

    ``corrected`` checks the forms that follow from translation and
    reflection invariance:
        [h-1 admissible] C_a(h-1, l-1) = A_a(h, l) - A_a(h-1, l)
        [h-1 admissible] B_a'(h-1, l-1) = A_a(h, l) - A_a(h-1, l), a' = -(h-1+a) mod q
        D(h-2, l-2) = A(h, l) - 2 A(h-1, l) + A(h-2, l)   (no coprimality condition)
    """
    if variant not in ("literal", "corrected"):
        raise InvalidParameterError("variant must be 'literal' or 'corrected'")
    _check_residue(q, a, "a")
    dA = _ss("A", h, ell, q, a, table) - _ss("A", h - 1, ell, q, a, table)
    if variant == "literal":
        errs = [
            abs(_ss("B", h - 1, ell - 1, q, a, table) - dA),
            abs(_ss("C", h - 1, ell - 1, q, a, table) - dA),
        ]
        if ell >= 2:
            d2 = dA - (_ss("A", h - 1, ell, q, a, table) - _ss("A", h - 2, ell, q, a, table))
            errs.append(abs(_ss("D", h - 1, ell - 2, q, a, table) - d2))
        return max(errs)
    ind = 1.0 if math.gcd(h - 1 + a, q) == 1 else 0.0
    a_ref = (-(h - 1 + a)) % q
    errs = [
        abs(ind * _ss("C", h - 1, ell - 1, q, a, table) - dA),
        abs(ind * _ss("B", h - 1, ell - 1, q, a_ref, table) - dA),
    ]
    if ell >= 2:
        u = [_ss("A", h - i, ell, q, None, table) for i in range(3)]
        errs.append(abs(_ss("D", h - 2, ell - 2, q, None, table) - (u[0] - 2 * u[1] + u[2])))
    return max(errs)


# ---------------------------------------------------------------------------
# subset-sum kernel


@njit(cache=True)
def _subset_products(h, pool, primes, max_j):  # pragma: no cover - compiled
    """F_j numerators: sum over j-subsets U of pool of prod_p (1 - nu_p({0,h}|U)/p)."""
    n_p = primes.shape[0]
    n = pool.shape[0]
    F = np.zeros(max_j + 1)
    comp = np.zeros(max_j + 1)
    pmax = 0
    for i in range(n_p):
        if primes[i] > pmax:
            pmax = primes[i]
    occ = np.zeros((n_p, pmax), np.int32)
    nu = np.zeros(n_p, np.int64)
    res = np.empty((n, n_p), np.int64)
    for k in range(n):
        for i in range(n_p):
            res[k, i] = pool[k] % primes[i]
    base = 1.0
    for i in range(n_p):
        p = primes[i]
        occ[i, 0] += 1
        nu[i] = 1
        r = h % p
        if occ[i, r] == 0:
            nu[i] += 1
        occ[i, r] += 1
        if nu[i] == p:
            return F
        base *= (p - nu[i]) / p
    F[0] = base
    if max_j == 0 or n == 0:
        return F
    prods = np.empty(max_j + 1)
    prods[0] = base
    chosen = np.empty(max_j, np.int64)
    d = 0
    cur = 0
    while True:
        if d < max_j and cur < n:
            ok = True
            for i in range(n_p):
                if occ[i, res[cur, i]] == 0 and nu[i] + 1 == primes[i]:
                    ok = False
                    break
            if not ok:
                cur += 1
                continue
            ratio = 1.0
            for i in range(n_p):
                r = res[cur, i]
                if occ[i, r] == 0:
                    p = primes[i]
                    ratio *= (p - nu[i] - 1) / (p - nu[i])
                    nu[i] += 1
                occ[i, r] += 1
            chosen[d] = cur
            prods[d + 1] = prods[d] * ratio
            # Neumaier summation
            v = prods[d + 1]
            s = F[d + 1]
            t = s + v
            if abs(s) >= abs(v):
                comp[d + 1] += (s - t) + v
            else:
                comp[d + 1] += (v - t) + s
            F[d + 1] = t
            d += 1
            cur += 1
        else:
            if d == 0:
                break
            d -= 1
            c = chosen[d]
            for i in range(n_p):
                r = res[c, i]
                occ[i, r] -= 1
                if occ[i, r] == 0:
                    nu[i] -= 1
            cur = c + 1
    for j in range(max_j + 1):
        F[j] += comp[j]
    return F


def _kernel_primes(P: int, q: int) -> np.ndarray:
    return np.array([int(p) for p in small_primes(P) if q % int(p)], dtype=np.int64)


def _dk(k: int, P: int, q: int, target: float) -> float:
    """Denominator and tail factor shared by every k-element set with cutoff P."""
    logs = [-k * math.log1p(-1.0 / int(p)) for p in small_primes(P) if q % int(p)]
    L, _ = tail_log_factor(k, P, q, target)
    return math.exp(math.fsum(logs) + L)


def f_sums(h: int, q: int, a: int, max_j: int, target: float = KERNEL_TARGET) -> list[float]:
    """F_j(h) for j = 0..max_j (sums of S_q({0, h} | U) over j-subsets U)."""
    P = max(MIN_CUTOFF, h)
    primes = _kernel_primes(P, q)
    pool = allowed_offsets(h, q, a)
    # Offsets that already fill every class of some prime together with {0, h}.
    keep = []
    for t in pool:
        dead = False
        for p in primes:
            p = int(p)
            if p <= 3 and len({0, h % p, t % p}) == p:
                dead = True
                break
        if not dead:
            keep.append(t)
    F = _subset_products(h, np.array(keep, dtype=np.int64), primes, max_j)
    return [float(F[j]) * _dk(j + 2, P, q, target) for j in range(max_j + 1)]


def k_value(h: int, n: int, q: int, a: int, target: float = KERNEL_TARGET) -> float:
    """K(h, n): sum over A subset {0,h} and n-subsets T of S_h of S_{q,0}(A | T)."""
    F = f_sums(h, q, a, n, target)
    s = len(allowed_offsets(h, q, a))
    return _combine(F, s, n)


def _combine(F, s, n):
    terms = [(-1) ** (n - j) * math.comb(s - j, n - j) * F[j] for j in range(n + 1) if s >= j]
    return math.fsum(terms)


def _k_row(args):
    h, q, a, n_max, target = args
    F = f_sums(h, q, a, n_max, target)
    s = len(allowed_offsets(h, q, a))
    return [_combine(F, s, n) for n in range(n_max + 1)]


_K_MEMO: dict = {}


def k_table(
    q: int,
    a: int,
    b: int,
    h_max: int,
    n_max: int = MAX_NMAX,
    workers: int = 1,
    cache_dir: str | os.PathLike | None = None,
    target: float = KERNEL_TARGET,
) -> dict[int, list[float]]:
    """K(h, n) for admissible h <= h_max and n <= n_max, memoised in memory and on disk."""
    a %= q
    b %= q
    h0 = (b - a) % q or q
    hs = list(range(h0, h_max + 1, q))
    key = (q, a, h0, n_max, target)
    have = _K_MEMO.setdefault(key, {})
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"ktable_q{q}_a{a}_b{b}_n{n_max}.json"
        if path.exists() and not have:
            data = json.loads(path.read_text())
            if data.get("target") == target:
                have.update({int(h): [float(v) for v in row] for h, row in data["rows"].items()})
    todo = [h for h in hs if h not in have]
    if todo:
        jobs = [(h, q, a, n_max, target) for h in todo]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(_k_row, jobs))
        else:
            rows = [_k_row(j) for j in jobs]
        have.update(zip(todo, rows))
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            payload = {
                "q": q,
                "a": a,
                "b": b,
                "target": target,
                "rows": {str(h): [format(v, ".17g") for v in have[h]] for h in sorted(have)},
            }
            path.write_text(json.dumps(payload, indent=0) + "\n")
    return {h: have[h] for h in hs}


# ---------------------------------------------------------------------------
# D_n and the integral


def _k_from_table(h, n, q, a, table):
    return math.fsum(_ss(kind, h, n, q, a, table) for kind in "ABCD")


def d_n(
    params: ConjectureParams,
    y: float,
    n: int,
    table: SeriesTable | None = None,
    coeffs: Coefficients | None = None,
    workers: int = 1,
) -> float:
    """D_n(a, b; y): the |T| = n slice of the gap sum, cut at h <= c log log y log y.

    With ``table`` the inner sums are enumerated from stored values; otherwise
    the subset-sum kernel is used. ``coeffs`` overrides alpha, z and g.
    """
    if n < 0:
        raise InvalidParameterError("n must be >= 0")
    co = coeffs or coefficients(y, params.q)
    hs = params.gaps(y)
    if not hs:
        return 0.0
    if table is None:
        K = k_table(params.q, params.a, params.b, hs[-1], max(n, params.n_max), workers)
        vals = [K[h][n] for h in hs]
    else:
        need = hs[-1]
        if need > table.max_elem or n + 2 > table.max_size:
            raise CacheMissError(
                f"table (max_size={table.max_size}, max_elem={table.max_elem}) cannot supply "
                f"the largest needed set of size {n + 2} with max element {need}"
            )
        vals = [_k_from_table(h, n, params.q, params.a, table) for h in hs]
    w = (-co.z) ** n
    return math.fsum(w * co.g**h * v for h, v in zip(hs, vals))


def geometric_part(params: ConjectureParams, y: float, truncated: bool = True) -> float:
    """The A = T = empty part of D_0: sum of g**h over admissible gaps."""
    co = coefficients(y, params.q)
    g, q, h0 = co.g, params.q, params.h0
    if not truncated:
        return g**h0 / (1.0 - g**q)
    N = len(params.gaps(y))
    return g**h0 * -math.expm1(N * q * math.log(g)) / (1.0 - g**q)


@dataclass(frozen=True)
class Prediction:
    x: float
    q: int
    a: int
    b: int
    n_max: int
    value: float
    err_estimate: float
    y0: float
    lower_tail_bound: float


def _h_limit_u(params: ConjectureParams, u: float) -> int:
    return int(math.floor(params.c * math.log(u) * u))


def _jump_points(params: ConjectureParams, lo: float, hi: float) -> list[float]:
    """log y values where the admissible gap range gains a new gap."""
    out = []
    u_lo, u_hi = math.log(lo), math.log(hi)
    h_lo = params.h_limit(lo)
    h_hi = params.h_limit(hi)
    for h in range(h_lo + 1, h_hi + 1):
        if (h - params.h0) % params.q:
            continue
        # Solve c * log(u) * u = h for u by bisection.
        a, b = u_lo, u_hi
        for _ in range(200):
            m = 0.5 * (a + b)
            if params.c * math.log(m) * m < h:
                a = m
            else:
                b = m
        out.append(b)
    return out


class _Integrand:
    """Integrand in u = log y (Jacobian included) with the first ``m`` gaps."""

    def __init__(self, params: ConjectureParams, K: dict[int, list[float]], eps: float, m: int):
        self.p = params
        self.eps = eps
        hs = sorted(K)[:m]
        self.hs = np.array(hs, dtype=float)
        self.K = np.array([K[h][: params.n_max + 1] for h in hs]).reshape(len(hs), params.n_max + 1)
        self.phi = totient(params.q)
        self.npow = np.arange(params.n_max + 1)

    def __call__(self, u: float) -> float:
        p = self.p
        alpha = 1.0 - p.q / (self.phi * u)
        z = p.q / (self.phi * alpha * u)
        g = alpha ** (self.phi / p.q)
        D = float(np.sum((g**self.hs)[:, None] * self.K * ((-z) ** self.npow)[None, :]))
        w = z * z if p.normalization == "printed" else (alpha * z) ** 2
        return alpha**self.eps * w * D * math.exp(u) / p.q


def predict(
    params: ConjectureParams,
    x: float,
    workers: int = 1,
    cache_dir=None,
) -> Prediction:
    """Quadrature of (1/q) alpha^eps w(y) sum_{n <= n_max} D_n over [y0, x].

    w is (q/(phi log y))**2 by default, which makes the four pair patterns add
    up to li(x) at leading order; ``normalization="printed"`` uses z**2.

    ``y0`` is the first point where alpha > 0 (the part below it is set to 0;
    ``lower_tail_bound`` is the trivial count bound pi(y0) for it).
    """
    if x < 100:
        raise DomainError("predict needs x >= 100")
    q = params.q
    y0 = max(params.lower, math.exp(2 * q / totient(q)) + 1)
    eps = params.epsilon if params.epsilon is not None else epsilon_q(q, params.a, params.b).value
    K = k_table(q, params.a, params.b, params.h_limit(x), params.n_max, workers, cache_dir)
    u0, u1 = math.log(y0), math.log(x)
    n_pan = max(1, math.ceil((u1 - u0) / params.panel_width))
    edges = set(u0 + (u1 - u0) * i / n_pan for i in range(n_pan + 1))
    edges.update(_jump_points(params, y0, x))
    edges = sorted(e for e in edges if u0 <= e <= u1)
    # The gap range is constant inside each panel; read it off the midpoint.
    fs = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (lo + hi)
        m = len(range(params.h0, _h_limit_u(params, mid) + 1, q))
        fs.append(_Integrand(params, K, eps, m))
    value, err = integrate_panels(fs, edges, params.rel_tol)
    lower_bound = float(len(small_primes(int(y0))))
    return Prediction(x, q, params.a, params.b, params.n_max, value, err, y0, lower_bound)


# ---------------------------------------------------------------------------
# the simplified asymptotic


def simplified_factor(x: float, same_residue: bool, q: int = 3) -> float:
    """1 -/+ log(2 pi log x / q) / (2 log x); minus for a = b."""
    L = math.log(x)
    corr = math.log(2 * math.pi * L / q) / (2 * L)
    return 1.0 - corr if same_residue else 1.0 + corr


def simplified_prediction(x: float, same_residue: bool, q: int = 3) -> float:
    """li(x)/4 times the first-order correction, for q = 3."""
    if x < 10:
        raise DomainError("simplified_prediction needs x >= 10")
    return log_integral(x).value / 4 * simplified_factor(x, same_residue, q)


def with_coefficients(co: Coefficients, **changes) -> Coefficients:
    return replace(co, **changes)
