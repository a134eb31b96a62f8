import pytest
from hypothesis import HealthCheck, settings

from chainflux.disorder import MassDisorder

settings.register_profile("chainflux", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("chainflux")

_CRITERIA = []


@pytest.fixture
def uniform():
    return MassDisorder("uniform", 0.5)


@pytest.fixture(scope="session")
def criterion_log():
    """Collects one line per acceptance criterion; printed in the terminal summary."""
    return _CRITERIA


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(_CRITERIA):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:2d} {name}: {detail}")
