import pytest
from hypothesis import HealthCheck, settings

from ifckit import lattice as lat
from ifckit.workbench.cases import load

settings.register_profile(
    "ifckit",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("ifckit")


@pytest.fixture(scope="session")
def tri():
    return lat.resolve("trilevel")


@pytest.fixture(scope="session")
def edr():
    return lat.resolve("edr")


@pytest.fixture(scope="session")
def corpus():
    cache = {}

    def get(name, tcb=False):
        key = (name, tcb)
        if key not in cache:
            cache[key] = load(name, allow_tcb=tcb)
        return cache[key]

    return get


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict(capsys):
    """Print one pass/fail line for an acceptance criterion, then assert it."""

    def emit(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
