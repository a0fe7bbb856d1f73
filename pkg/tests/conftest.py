import pytest

from trunclap.nonlinearity import make_cubic, make_scaled_cubic


@pytest.fixture(scope="session")
def cubic1():
    return make_cubic(1.0)


@pytest.fixture(scope="session")
def cubic3():
    return make_cubic(3.0)


@pytest.fixture(scope="session")
def quarter_cubic():
    """g = (u - u^3)/4, the periodic-orbit example."""
    return make_scaled_cubic(0.25, 1.0)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number: int, description: str, ok: bool, detail: str = "") -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {description}"
        if detail:
            line += f" [{detail}]"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
