import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def three_cluster_1d(n, seed, means=(0.0, 5.0, 10.0), sigma=0.5):
    r = np.random.default_rng([seed, 777])
    lab = r.integers(0, len(means), n)
    return np.asarray(means)[lab] + sigma * r.standard_normal(n), lab


def pytest_configure(config):
    config.criterion_lines = []


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion and fail on a miss."""
    def check(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}"
        request.config.criterion_lines.append(line)
        print(line)
        assert ok, line
    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "criterion_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
