import math
import random

import pytest

from primepatterns.errors import BudgetError, InvalidParameterError, MissingWindowError
from primepatterns.prime_engine import all_patterns, count_patterns, li, primes_after
from primepatterns.sampler import (
    FrequencyRecord,
    SampleWindow,
    binomial_precision,
    coverage_grid,
    grid_points,
    read_records,
    sample_window,
    stitch,
    write_records,
    write_stitched,
)


def synthetic_grid(b1, q, k, freq):
    """Records with frequencies given by freq(alpha, beta, key)."""
    out = {}
    for al, be in grid_points(b1):
        w = SampleWindow(al * 10**be, 1000, q, k)
        f = {key: freq(al, be, key) for key in all_patterns(q, k)}
        out[(al, be)] = FrequencyRecord(w, f, binomial_precision(1000), 1000)
    return out


def test_first_25_primes_above_2():
    # 3..101: eleven primes are 1 mod 3, thirteen are 2 mod 3, plus 3 itself.
    w = SampleWindow(2, 25, 3, 1)
    raw = sample_window(w, raw_denominator=True)
    assert raw[(1,)] == 11 / 25 and raw[(2,)] == 13 / 25
    cop = sample_window(w)
    assert cop[(1,)] == 11 / 24 and cop[(2,)] == 13 / 24
    assert cop.sigma == 0.2


def test_window_matches_exact_count():
    w = SampleWindow(10**6, 10**5, 10, 2)
    rec = sample_window(w)
    ps = primes_after(10**6, 10**5)
    last_start = int(ps[-2])
    hi = count_patterns(10, 2, x=last_start)
    lo = count_patterns(10, 2, x=10**6)
    denom = hi.total_pairs - lo.total_pairs
    for key in all_patterns(10, 2):
        exact = (hi[key] - lo[key]) / denom
        assert abs(rec[key] - exact) <= 5 * rec.sigma
        assert rec[key] == exact


@pytest.mark.parametrize("X,C,q,k", [(2, 1000, 10, 2), (97, 3000, 7, 3), (10**7, 2000, 12, 2), (5, 1, 3, 1)])
def test_frequencies_sum_to_one(X, C, q, k):
    rec = sample_window(SampleWindow(X, C, q, k))
    assert abs(math.fsum(rec.frequencies.values()) - 1) <= 1 / C
    assert rec.sigma == 1 / math.sqrt(C)


def test_window_budget():
    with pytest.raises(BudgetError, match="span"):
        sample_window(SampleWindow(10**9, 10**5, 3), max_span=10**5)


def test_window_validation():
    with pytest.raises(InvalidParameterError):
        SampleWindow(1, 10, 3)
    with pytest.raises(InvalidParameterError):
        SampleWindow(10, 0, 3)


@pytest.mark.parametrize("C,want", [(10**8, 1e-4), (10**4, 1e-2), (1, 1.0)])
def test_binomial_precision(C, want):
    assert binomial_precision(C) == want


# -- stitching ---------------------------------------------------------------


@pytest.mark.parametrize("b1", [1, 3, 6])
def test_stitch_constant_frequency(b1):
    phi = 0.3
    est = stitch(synthetic_grid(b1, 3, 2, lambda *_: phi), b1)
    want = phi * (li(10 ** (b1 + 1)) - li(10)) / li(9 * 10**b1)
    for key in all_patterns(3, 2):
        assert abs(est[key] - want) <= 1e-12
    tel = stitch(synthetic_grid(b1, 3, 2, lambda *_: phi), b1, denominator="telescoped")
    assert tel[(1, 2)] == pytest.approx(phi, rel=1e-14)


def test_stitch_zero():
    est = stitch(synthetic_grid(4, 5, 2, lambda *_: 0.0), 4)
    assert all(v == 0.0 for v in est.values.values())


def test_stitch_linearity():
    rng = random.Random(7)
    fa = {(al, be, key): rng.random() for al, be in grid_points(3) for key in all_patterns(3, 2)}
    fb = {(al, be, key): rng.random() for al, be in grid_points(3) for key in all_patterns(3, 2)}
    lam = 0.37
    A = stitch(synthetic_grid(3, 3, 2, lambda al, be, k: fa[al, be, k]), 3)
    B = stitch(synthetic_grid(3, 3, 2, lambda al, be, k: fb[al, be, k]), 3)
    M = stitch(synthetic_grid(3, 3, 2, lambda al, be, k: lam * fa[al, be, k] + (1 - lam) * fb[al, be, k]), 3)
    for key in all_patterns(3, 2):
        assert M[key] == pytest.approx(lam * A[key] + (1 - lam) * B[key], abs=1e-14)


def test_stitch_robustness():
    b1, delta = 4, 0.01
    base = stitch(synthetic_grid(b1, 3, 2, lambda *_: 0.25), b1)
    bump = stitch(
        synthetic_grid(b1, 3, 2, lambda al, be, k: 0.25 + (delta if (al, be) == (5, 3) else 0.0)), b1
    )
    max_w = max(base.weights.values())
    for key in all_patterns(3, 2):
        assert abs(bump[key] - base[key]) <= delta * max_w / li(9 * 10**b1) * (1 + 1e-12)


def test_stitch_missing_windows():
    grid = synthetic_grid(3, 3, 2, lambda *_: 0.25)
    del grid[(4, 2)], grid[(9, 3)]
    with pytest.raises(MissingWindowError, match="4e2, 9e3"):
        stitch(grid, 3)


def test_stitch_bad_denominator():
    with pytest.raises(InvalidParameterError):
        stitch(synthetic_grid(1, 3, 2, lambda *_: 0.25), 1, denominator="other")


@pytest.mark.parametrize("b1", [5, 6])
def test_full_coverage_stitch_tracks_exact_ratio(b1):
    grid = coverage_grid(b1, 3, 2)
    est = stitch(grid, b1, denominator="telescoped")
    exact = count_patterns(3, 2, x=9 * 10**b1)
    C = max(r.window.C for r in grid.values())
    for key in all_patterns(3, 2):
        assert abs(est[key] - exact.ratio(key)) <= 3 / math.sqrt(C)


def test_stitch_values_in_unit_interval():
    est = stitch(coverage_grid(4, 3, 2), 4)
    assert all(0 <= v <= 1 for v in est.values.values())


# -- files ---------------------------------------------------------------


def test_record_csv_roundtrip(tmp_path):
    recs = [sample_window(SampleWindow(X, 500, 3, 2)) for X in (10, 20)]
    write_records(recs, tmp_path / "w.csv")
    assert (tmp_path / "w.csv").read_text().splitlines()[0] == "X,C,q,k,pattern,frequency,sigma"
    back = read_records(tmp_path)
    assert [r.window for r in back] == [r.window for r in recs]
    assert [r.frequencies for r in back] == [r.frequencies for r in recs]


def test_grid_roundtrip_through_files(tmp_path):
    grid = coverage_grid(2, 3, 2)
    for (al, be), rec in grid.items():
        write_records([rec], tmp_path / f"w_{be}_{al}.csv")
    back = read_records(tmp_path)
    a = stitch(grid, 2)
    b = stitch(back, 2)
    assert a.values == b.values
    write_stitched(b, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "b1,q,pattern,estimate" and len(lines) == 5
