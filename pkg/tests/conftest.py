import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fluxgates.circuit import DEVICE_PARAMS, diagonalize, qubit_frame  # noqa: E402
from fluxgates.dynamics import device_two_level  # noqa: E402


@pytest.fixture(scope="session")
def device_eig():
    return diagonalize(DEVICE_PARAMS, keep=6)


@pytest.fixture(scope="session")
def qubit_eig():
    """Device model truncated to the qubit levels."""
    return diagonalize(DEVICE_PARAMS, keep=2)


@pytest.fixture(scope="session")
def ideal_qubit():
    """Two-level model at the device frequency with unit line strengths."""
    return device_two_level()


@pytest.fixture(scope="session")
def frame(qubit_eig):
    return qubit_frame(qubit_eig)


# ---------------------------------------------------------------- acceptance summary

_CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _CRITERIA[number] = (title, "PASS" if report.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, verdict = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {title}")
