import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA] = {}


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_CRITERIA, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines, key=lambda k: (int(k.rstrip("abcde")), k)):
        ok, detail = lines[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {key:<3} {detail}")


@pytest.fixture
def criterion(request):
    """Record one acceptance line, then assert it."""
    store = request.config.stash[_CRITERIA]

    def record(key, ok, detail):
        store[key] = (bool(ok), detail)
        print(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}")
        assert ok, f"criterion {key}: {detail}"

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
