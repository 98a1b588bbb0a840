from pathlib import Path

import numpy as np
import pytest

from hjb_portfolio.market_data import make_asset_stats, read_asset_file

DATA = Path(__file__).resolve().parents[1] / "src" / "hjb_portfolio" / "data"

_acceptance_lines = []


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def record_criterion():
    """Print and keep one pass/fail line per acceptance criterion."""
    def record(number, title, checks, elapsed, limit, details=""):
        checks = dict(checks)
        checks[f"runtime < {limit:g} s"] = elapsed < limit
        failed = [name for name, ok in checks.items() if not ok]
        status = "PASS" if not failed else "FAIL"
        line = f"[criterion {number}] {status} {title} ({elapsed:.2f} s)"
        if details:
            line += f" :: {details}"
        if failed:
            line += " :: failed: " + "; ".join(failed)
        print(line)
        _acceptance_lines.append(line)
        return failed
    return record


@pytest.fixture
def two_asset():
    return make_asset_stats(["A", "B"], [0.1, 0.05], np.diag([0.04, 0.01]))


@pytest.fixture
def three_asset():
    return random_universe(3, seed=7)


@pytest.fixture
def synthetic30():
    return read_asset_file(DATA / "synthetic30.csv")


def random_universe(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(scale=0.2, size=(n, n))
    sigma = a @ a.T + 0.01 * np.eye(n)
    mu = rng.uniform(0.02, 0.15, size=n)
    return make_asset_stats([f"S{i}" for i in range(n)], mu, sigma)
