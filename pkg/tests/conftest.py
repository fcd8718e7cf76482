from pathlib import Path

import pytest

from h2size.trace import read_trace

FIXTURES = Path(__file__).parent / "fixtures"

_criteria: dict[int, tuple[str, list[str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when not in ("setup", "call"):
        return
    n, title = mark.args
    _, results = _criteria.setdefault(n, (title, []))
    if report.when == "call" or report.failed:
        results.append("PASS" if report.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, results = _criteria[n]
        status = "PASS" if results and all(r == "PASS" for r in results) else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {status}  {title}")


@pytest.fixture(scope="session")
def toy_conn():
    return read_trace(FIXTURES / "toy.trace")[0].connections[0]


@pytest.fixture(scope="session")
def toy_capture():
    return read_trace(FIXTURES / "toy.trace")[0]
