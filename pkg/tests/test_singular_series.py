import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from primepatterns.errors import BudgetError, CacheMissError, InvalidParameterError, TableIOError
from primepatterns.singular_series import (
    SeriesTable,
    TupleSet,
    build_table,
    compute_table,
    fit_ms_constant,
    ms_average,
    normal_moment,
    residue_count,
    singular_series,
    zeroed_series,
)


def _eratosthenes(n: int) -> np.ndarray:
    s = np.ones(n + 1, dtype=bool)
    s[:2] = False
    for p in range(2, math.isqrt(n) + 1):
        if s[p]:
            s[p * p :: p] = False
    return np.flatnonzero(s)


@pytest.fixture(scope="module")
def twin_constant():
    """2 C_2 from the Euler product over p <= 1e8 plus the leading tail term."""
    P = 10**8
    p = _eratosthenes(P)[1:].astype(np.float64)
    log_prod = math.fsum(np.log1p(-1.0 / (p - 1.0) ** 2))
    # sum_{p > P} log(1 - 1/(p-1)^2) ~ -sum 1/p^2 ~ -1/(P log P)
    tail = -1.0 / (P * math.log(P))
    return 2.0 * math.exp(log_prod + tail)


# -- residue counts ------------------------------------------------------------


def test_residue_count_examples():
    assert residue_count((0, 2), 2) == 1
    assert residue_count((0, 2), 3) == 2
    assert residue_count((0, 2, 6), 3) == 2


@pytest.mark.parametrize("p", [1, 4, 9, 15])
def test_residue_count_rejects_non_primes(p):
    with pytest.raises(InvalidParameterError):
        residue_count((0, 2), p)


@given(st.lists(st.integers(0, 200), min_size=1, max_size=7, unique=True), st.sampled_from([2, 3, 5, 7, 11, 13]))
def test_residue_count_range(H, p):
    assert 1 <= residue_count(H, p) <= min(len(H), p)


# -- plain series ----------------------------------------------------------------


def test_plain_examples():
    assert singular_series(()).value == 1.0
    v = singular_series((0, 1))
    assert v.value == 0.0 and v.tail_bound == 0.0
    assert singular_series((7,), q=3).value == 1.0


def test_twin_prime_constant(twin_constant):
    assert abs(twin_constant - 1.3203236316937391) < 1e-9
    assert abs(singular_series((0, 2)).value - twin_constant) < 1e-6


def test_bad_cutoff_target():
    with pytest.raises(InvalidParameterError):
        singular_series((0, 2), cutoff_target=0)


def test_q_skips_its_primes():
    # Dropping the p = 3 factor of S({0,2}) (which is (1/3)/(4/9) = 3/4).
    s1 = singular_series((0, 2)).value
    s3 = singular_series((0, 2), q=3).value
    assert s3 == pytest.approx(s1 / 0.75, rel=1e-12)
    # (0,1) dies at p = 2 unless 2 | q.
    assert singular_series((0, 1), q=2).value > 0


@given(st.lists(st.integers(0, 120), min_size=0, max_size=6, unique=True), st.sampled_from([1, 3, 5, 10]))
@settings(max_examples=60, deadline=None)
def test_plain_nonnegative(H, q):
    assert singular_series(H, q).value >= 0.0


def test_tail_bound_nonnegative_and_cutoff_stable():
    for H in [(0, 2), (0, 2, 6), (0, 4, 6, 10), (0, 2, 6, 8, 12), (0, 30, 90)]:
        for q in (1, 3):
            a = zeroed_series(H, q)
            b = zeroed_series(H, q, prime_cutoff=2 * a.prime_cutoff)
            assert a.tail_bound >= 0
            assert abs(a.value - b.value) <= a.tail_bound


# -- zeroed series ---------------------------------------------------------------


def test_zeroed_examples(twin_constant):
    assert zeroed_series((), 5).value == 1.0
    assert zeroed_series((5,), 3).value == 0.0
    # S({0,2}) - S({0}) - S({2}) + S(empty)
    assert abs(zeroed_series((0, 2)).value - (twin_constant - 1.0)) < 1e-6


def test_zeroed_size_budget():
    with pytest.raises(BudgetError, match=r"2\*\*7"):
        zeroed_series(range(8))


sets = st.lists(st.integers(0, 60), min_size=0, max_size=6, unique=True)


@given(sets, st.integers(0, 80), st.sampled_from([1, 3, 5]))
@settings(max_examples=200, deadline=None)
def test_translation_and_reflection_bit_exact(H, s, q):
    base = zeroed_series(H, q).value
    assert zeroed_series([h + s for h in H], q).value == base
    if H:
        top = max(H)
        assert zeroed_series([top - h for h in H], q).value == base


def test_reflection_drift_when_recomputed():
    H = (0, 4, 6, 10, 16)
    direct = zeroed_series(H, 3, prime_cutoff=211).value
    mirrored = zeroed_series([16 - h for h in H], 3, prime_cutoff=211).value
    assert abs(direct - mirrored) <= 1e-12


@pytest.mark.parametrize("q", [1, 3, 5])
def test_mobius_involution(q):
    for size in range(5):
        for H in itertools.combinations((0, 2, 6, 8, 12, 14), size):
            total = math.fsum(
                zeroed_series(T, q).value for r in range(size + 1) for T in itertools.combinations(H, r)
            )
            assert total == pytest.approx(singular_series(H, q).value, abs=1e-12)


def test_tupleset():
    T = TupleSet([6, 2, 4])
    assert T.elements == (2, 4, 6) and T.diameter == 4
    assert T.canonical().elements == (0, 2, 4)
    with pytest.raises(InvalidParameterError):
        TupleSet([1, 1])
    with pytest.raises(InvalidParameterError):
        TupleSet(range(8))
    with pytest.raises(InvalidParameterError):
        TupleSet([0, 151], max_elem=150)


# -- tables --------------------------------------------------------------------


def test_table_singletons(tmp_path):
    t = build_table(3, max_size=1, directory=tmp_path)
    assert t.value(()) == 1.0
    assert t.value((0,)) == 0.0
    assert t.value((97,)) == 0.0


def test_table_translation(tmp_path):
    t = build_table(3, max_size=2, max_elem=10, directory=tmp_path)
    assert len(t) == 12
    assert t.value((3, 6)) == t.value((0, 3))
    for s in range(1, 11):
        assert t.value((0, s)) == zeroed_series((0, s), 3).value


def test_table_recompute_bit_exact():
    t = compute_table(5, max_size=3, max_elem=20)
    for elems, sv in t.entries.items():
        fresh = zeroed_series(elems, 5, prime_cutoff=None)
        assert sv.value == fresh.value


def test_table_parallel_build_identical():
    a = compute_table(3, max_size=3, max_elem=12, workers=1)
    b = compute_table(3, max_size=3, max_elem=12, workers=2)
    assert list(a.dump_lines()) == list(b.dump_lines())


def test_table_persistence(tmp_path, monkeypatch):
    monkeypatch.setenv("PRIMEPATTERNS_TABLE_DIR", str(tmp_path))
    t = build_table(3, max_size=3, max_elem=15)
    files = sorted(p.name for p in tmp_path.iterdir())
    assert any(f.endswith(".jsonl") for f in files)
    jsonl = next(tmp_path.glob("*.jsonl"))
    first = json.loads(jsonl.read_text().splitlines()[1])
    assert set(first) == {"q", "set", "value", "prime_cutoff", "tail_bound"}
    assert isinstance(first["value"], str)
    again = build_table(3, max_size=3, max_elem=15)
    assert again.entries == t.entries
    assert SeriesTable.load(jsonl).value((2, 5)) == t.value((0, 3))


def test_table_cache_miss(tmp_path):
    t = build_table(3, max_size=2, max_elem=10, directory=tmp_path)
    with pytest.raises(CacheMissError, match=r"0, 11"):
        t.value((0, 11))
    with pytest.raises(CacheMissError):
        t.value((0, 2, 4))


def test_table_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(TableIOError, match="file"):
        build_table(3, max_size=1, directory=blocker / "sub")


# -- averages ------------------------------------------------------------------


def test_normal_moments():
    assert [normal_moment(l) for l in range(7)] == [1, 0, 1, 0, 3, 0, 15]


def test_ms_average_singletons():
    m = ms_average(5, 1, 1, A=-0.5)
    assert m.lhs == 0.0 and m.model == 0.0


def test_ms_average_three_terms():
    want = math.fsum(zeroed_series(T).value for T in [(1, 2), (1, 3), (2, 3)])
    assert ms_average(3, 2, 1).lhs == pytest.approx(want, abs=1e-15)


@pytest.mark.parametrize("h,ell,q", [(9, 2, 1), (10, 3, 3), (8, 4, 1), (12, 2, 5)])
def test_ms_average_brute_force(h, ell, q):
    want = math.fsum(zeroed_series(T, q).value for T in itertools.combinations(range(1, h + 1), ell))
    assert ms_average(h, ell, q).lhs == pytest.approx(want, abs=1e-12)


def test_fitted_constant_in_range():
    A, pref = fit_ms_constant(1)
    assert -1 < A < 0 and pref == 1.0
    m = ms_average(40, 2, 1, A=A)
    assert m.lhs == pytest.approx(m.model, rel=0.05)


def test_ms_average_budget():
    with pytest.raises(BudgetError):
        ms_average(400, 4)
    with pytest.raises(InvalidParameterError):
        ms_average(10, 5)
