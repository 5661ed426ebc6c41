import math

import pytest


def trial_division_primes(limit: int) -> list[int]:
    """Primes below ``limit`` by trial division against earlier primes."""
    out: list[int] = []
    for n in range(2, limit):
        r = math.isqrt(n)
        for p in out:
            if p > r:
                out.append(n)
                break
            if n % p == 0:
                break
        else:
            out.append(n)
    return out


@pytest.fixture(scope="session")
def primes_1e6():
    return trial_division_primes(10**6)


@pytest.fixture(autouse=True)
def _isolated_tables(tmp_path, monkeypatch):
    monkeypatch.setenv("PRIMEPATTERNS_TABLE_DIR", str(tmp_path / "tables"))


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
