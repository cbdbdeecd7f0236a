import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

import pytest

_ACCEPTANCE: list = []


class AcceptanceLog:
    """Records one verdict line per criterion check and fails the test on FAIL."""

    def check(self, n: int, ok: bool, detail: str) -> None:
        line = f"ACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line


@pytest.fixture
def acceptance():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
