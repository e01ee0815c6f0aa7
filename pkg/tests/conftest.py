import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_acceptance_lines = []


@pytest.fixture
def acceptance(capsys):
    """``acceptance(label, ok, detail)`` prints one PASS/FAIL line and fails the test if not ok."""
    def record(label, ok, detail):
        line = f"{label} {'PASS' if ok else 'FAIL'}  {detail}"
        _acceptance_lines.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
