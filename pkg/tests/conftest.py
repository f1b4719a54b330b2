import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kperiod.hamiltonians import TlsModel  # noqa: E402
from kperiod.ktupling import find_amplitude  # noqa: E402

TLS = TlsModel(1.0)


@pytest.fixture(scope="session")
def tls():
    return TLS


@pytest.fixture(scope="session")
def roots():
    """Engine roots A_Pk (j = 1, nu_d = Delta0 = 1 MHz) for k = 2..5."""
    return {k: find_amplitude(1, k, 1.0, TLS, certify=False).amplitude for k in (2, 3, 4, 5)}


# -- acceptance reporting ----------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    failed = report.failed or (report.when == "call" and report.outcome != "passed")
    previous = _CRITERIA.get(number, (title, "PASS", ""))
    if failed:
        _CRITERIA[number] = (title, "FAIL", str(report.longrepr).splitlines()[-1][:120])
    elif report.when == "call" and previous[1] != "FAIL":
        detail = getattr(item, "criterion_detail", "")
        _CRITERIA[number] = (title, "PASS", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, detail = _CRITERIA[number]
        line = f"criterion {number:2d} [{status}] {title}"
        terminalreporter.write_line(line + (f" -- {detail}" if detail else ""))
