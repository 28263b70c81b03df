import pytest

from mvtost import EquivalenceSpec

# filled by test_acceptance.py; printed in the terminal summary
ACCEPTANCE_LINES = {}


@pytest.fixture
def spec():
    return EquivalenceSpec()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
