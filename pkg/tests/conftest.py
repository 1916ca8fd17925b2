import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("fearlab", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "fearlab"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """``acceptance(number, title, ok, detail)`` records one pass/fail line and asserts."""

    def record(number, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}"
        request.config._acceptance_lines.append(line)
        print(line)
        assert ok, line

    def skip(number, title, reason):
        request.config._acceptance_lines.append(f"[SKIP] criterion {number}: {title} -- {reason}")
        pytest.skip(reason)

    record.skip = skip
    return record
