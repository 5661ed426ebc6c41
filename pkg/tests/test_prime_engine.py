import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from primepatterns.errors import BudgetError, DomainError, InvalidParameterError
from primepatterns.prime_engine import (
    PatternKey,
    count_patterns,
    count_patterns_at,
    first_primes,
    gap_exceedance,
    gap_records,
    li,
    log_integral,
    prime_counts_at,
    primes_after,
    read_counts,
    sieve_segment,
    write_counts,
)

from conftest import trial_division_primes

SMALL = trial_division_primes(200_000)


def brute_counts(q, k, x=None, first=None, primes=SMALL):
    counts = {}
    total = 0
    n_start = first if first is not None else sum(1 for p in primes if p <= x)
    for n in range(n_start):
        window = primes[n : n + k]
        assert len(window) == k, "oracle prime list too short"
        if all(math.gcd(p, q) == 1 for p in window):
            key = tuple(p % q for p in window)
            counts[key] = counts.get(key, 0) + 1
            total += 1
    return counts, total


# -- sieve -------------------------------------------------------------------


def test_sieve_small_ranges():
    assert sieve_segment(2, 20).tolist() == [2, 3, 5, 7, 11, 13, 17, 19]
    assert sieve_segment(20, 30).tolist() == [23, 29]


def test_sieve_to_one_million_matches_trial_division(primes_1e6):
    got = sieve_segment(1, 10**6)
    assert len(got) == 78498
    assert got.tolist() == primes_1e6


def test_sieve_budget_names_limit():
    with pytest.raises(BudgetError, match=str(2**26)):
        sieve_segment(2, 2 + 2**26 + 1)


@given(st.integers(2, 150_000), st.integers(1, 3000))
@settings(max_examples=60, deadline=None)
def test_sieve_segment_matches_oracle(lo, width):
    hi = min(lo + width, 200_000)
    if hi <= lo:
        return
    assert sieve_segment(lo, hi).tolist() == [p for p in SMALL if lo <= p < hi]


def test_first_primes_and_primes_after():
    assert first_primes(10).tolist() == [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]
    assert primes_after(100, 5).tolist() == [101, 103, 107, 109, 113]
    assert primes_after(2, 3).tolist() == [3, 5, 7]


# -- pattern counting ----------------------------------------------------------


def test_count_mod3_pairs_to_50():
    # Hand enumeration: 5,7,11,13,17,19,23,29,31,37,41,43,47 and successor 53.
    c = count_patterns(3, 2, x=50)
    assert c[(1, 1)] == 1  # 31 -> 37
    assert c[(1, 2)] == 5  # 7, 13, 19, 37, 43
    assert c[(2, 1)] == 5  # 5, 11, 17, 29, 41
    assert c[(2, 2)] == 2  # 23 -> 29, 47 -> 53
    assert c.total_pairs == 13


def test_count_mod3_singles_to_50():
    c = count_patterns(3, 1, x=50)
    assert c[(1,)] == 6  # 7 13 19 31 37 43
    assert c[(2,)] == 8  # 2 5 11 17 23 29 41 47
    assert c.total_pairs == 14  # every prime <= 50 except 3


def test_mod10_first_ten_million_ordering():
    c = count_patterns(10, 2, first=10**7)
    assert c[(1, 1)] < 10**7 / 16 < c[(9, 1)]
    assert c.total_pairs == 10**7 - 3  # windows starting at 2, 3 and 5 touch 2 or 5


@given(
    q=st.integers(3, 14),
    k=st.integers(1, 3),
    x=st.integers(2, 150_000),
)
@settings(max_examples=40, deadline=None)
def test_counts_match_brute_force(q, k, x):
    c = count_patterns(q, k, x=x, segment_size=1 << 14)
    want, total = brute_counts(q, k, x=x)
    assert {key.residues: n for key, n in c.counts.items() if n} == want
    assert c.total_pairs == total == sum(c.counts.values())


@given(q=st.integers(3, 12), k=st.integers(1, 4), n=st.integers(1, 20_000))
@settings(max_examples=30, deadline=None)
def test_first_mode_matches_brute_force(q, k, n):
    c = count_patterns(q, k, first=n, segment_size=1 << 13)
    want, total = brute_counts(q, k, first=n)
    assert {key.residues: v for key, v in c.counts.items() if v} == want
    assert c.total_pairs == total


@given(q=st.integers(3, 40), x=st.integers(10, 150_000))
@settings(max_examples=40, deadline=None)
def test_nesting_of_k1_and_k2(q, x):
    c1 = count_patterns(q, 1, x=x)
    c2 = count_patterns(q, 2, x=x)
    # Starts whose successor divides q appear in the k=1 tally only.
    idx = [i for i, p in enumerate(SMALL) if p <= x]
    lost = {}
    for i in idx:
        p, nxt = SMALL[i], SMALL[i + 1]
        if math.gcd(p, q) == 1 and q % nxt == 0:
            lost[p % q] = lost.get(p % q, 0) + 1
    for key, n in c1.counts.items():
        (a,) = key.residues
        marginal = sum(v for k2, v in c2.counts.items() if k2.residues[0] == a)
        assert n - marginal == lost.get(a, 0)


def test_multi_limit_equals_single_calls():
    xs = [10, 1000, 54321, 99991]
    many = count_patterns_at(5, 3, x=xs, segment_size=1 << 12)
    for x, res in zip(xs, many):
        assert res.counts == count_patterns(5, 3, x=x).counts


@pytest.mark.parametrize("workers", [1, 3])
def test_worker_count_does_not_change_counts(workers):
    ref = count_patterns(7, 2, x=3_000_000, segment_size=1 << 18)
    got = count_patterns(7, 2, x=3_000_000, workers=workers, segment_size=1 << 18)
    assert got == ref


def test_count_validation():
    with pytest.raises(InvalidParameterError):
        count_patterns(2, 2, x=100)
    with pytest.raises(InvalidParameterError):
        count_patterns(3, 5, x=100)
    with pytest.raises(InvalidParameterError):
        count_patterns(3, 0, x=100)
    with pytest.raises(InvalidParameterError):
        PatternKey(10, (1, 5))


def test_equidistribution_trend_mod3():
    xs = [10**4, 10**6, 10**8]
    counts = count_patterns_at(3, 1, x=xs)
    pis = prime_counts_at(xs)
    for a in (1, 2):
        dev = [abs(c[(a,)] / p - 0.5) for c, p in zip(counts, pis)]
        assert dev[0] > dev[1] > dev[2]


def test_counts_csv_roundtrip(tmp_path):
    res = count_patterns_at(10, 2, x=[100, 1000])
    path = tmp_path / "c.csv"
    write_counts(res, path)
    assert path.read_text().splitlines()[0] == "limit_type,limit,q,k,pattern,count"
    back = read_counts(path)
    for a, b in zip(res, back):
        assert {k: v for k, v in a.counts.items() if v} == {k: v for k, v in b.counts.items() if v}
        assert a.total_pairs == b.total_pairs


# -- logarithmic integral -------------------------------------------------------


def test_li_at_two_is_zero():
    assert log_integral(2).value == 0.0


def test_li_domain():
    with pytest.raises(DomainError):
        log_integral(1.999)


def test_li_near_prime_count():
    pi = 1229  # primes below 10^4 (sieve oracle)
    assert len(sieve_segment(2, 10**4)) == pi
    bound = math.sqrt(1e4) * math.log(1e4) / (8 * math.pi)
    assert abs(log_integral(1e4).value - pi) < bound


def _simpson(f, a, b, n):
    t = np.linspace(a, b, n + 1)
    y = f(t)
    h = (b - a) / n
    return h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


def test_li_matches_fixed_step_simpson():
    f = lambda t: 1.0 / np.log(t)  # noqa: E731
    oracle = _simpson(f, 2.0, 1e3, 200_000) + _simpson(f, 1e3, 1e6, 2_000_000)
    assert abs(li(1e6) - oracle) / oracle < 1e-10


@pytest.mark.parametrize("x", [1e3, 1e6, 1e9])
def test_li_derivative(x):
    h = x * 1e-4
    d = (li(x + h) - li(x - h)) / (2 * h)
    assert abs(d * math.log(x) - 1) < 1e-6


@given(st.floats(2.0, 1e12), st.floats(1e-9, 1.0))
@settings(max_examples=50, deadline=None)
def test_li_monotone(x, frac):
    y = x * (1 + frac)
    assert li(y) > li(x)


def test_li_error_estimate_within_tolerance():
    v = log_integral(1e12)
    assert v.error <= 1e-12 * v.value


# -- gaps ------------------------------------------------------------------------


def test_gap_records():
    recs = gap_records(1000)
    assert recs[0].p_n == 2 and recs[0].gap == 1
    assert all(r.gap >= 2 and r.gap % 2 == 0 for r in recs[1:])
    assert [r.n for r in recs[:3]] == [1, 2, 3]


def test_gap_exceedance_examples():
    assert gap_exceedance(10**4, 10) == 0.0
    assert gap_exceedance(10**4, 0) == 1.0
    assert gap_exceedance(10**5, 1) <= 10 / math.log(10**5)


def test_gap_exceedance_matches_direct_count():
    N, c = 5000, 0.5
    p = SMALL
    thr = c * math.log(math.log(p[N - 1]))
    want = sum(1 for n in range(N) if p[n + 1] - p[n] > thr * math.log(p[n])) / N
    assert gap_exceedance(N, c) == want


def test_gap_exceedance_validation():
    with pytest.raises(InvalidParameterError):
        gap_exceedance(99, 1)
    with pytest.raises(InvalidParameterError):
        gap_exceedance(1000, -1)
