import pytest


def pytest_configure(config):
    config._verdicts = []


@pytest.fixture
def verdicts(request):
    """Lines collected here are echoed in the terminal summary."""
    return request.config._verdicts


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_verdicts", [])
    if lines:
        terminalreporter.section("acceptance")
        for line in lines:
            terminalreporter.write_line(line)
