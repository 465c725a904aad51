import pytest


def pytest_configure(config):
    config._criteria_lines = []


@pytest.fixture(scope="session")
def criteria_log(pytestconfig):
    """Collect one pass/fail line per acceptance criterion for the summary."""

    def log(line: str) -> None:
        pytestconfig._criteria_lines.append(line)
        print(line)

    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criteria_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
