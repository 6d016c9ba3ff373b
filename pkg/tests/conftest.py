import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record one acceptance line; all lines are repeated in the terminal summary."""
    lines = request.config.stash[_VERDICTS]

    def record(number: int, passed: bool, detail: str, gate: bool = True) -> None:
        tag = ("PASS" if passed else "FAIL") if gate else "INFO"
        line = f"criterion {number:>2}: {tag}  {detail}"
        print(line)
        lines.append(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
