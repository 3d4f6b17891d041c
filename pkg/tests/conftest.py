import pytest

ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


@pytest.fixture
def record_criterion(request):
    """Store (and echo) the verdict line of one acceptance criterion."""
    def record(number: int, passed: bool, detail: str) -> None:
        line = f"C{number} {'PASS' if passed else 'FAIL'} {detail}"
        request.config.stash[ACCEPTANCE][number] = line
        print(line)
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
