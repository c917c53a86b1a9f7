import pytest

from adsv.channel import derive_channel

# Lines recorded by the acceptance module, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def cap():
    return derive_channel("capillary")


@pytest.fixture(scope="session")
def svc():
    return derive_channel("svc")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
