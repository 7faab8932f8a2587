import random

import pytest

_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): an acceptance criterion")


@pytest.fixture
def rng():
    return random.Random(20240611)


def pytest_runtest_logreport(report):
    marker = _criteria.get(report.nodeid)
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if hasattr(report, "wasxfail"):
            status = "XFAIL" if report.skipped else "XPASS"
        else:
            status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        marker["status"] = status
        marker["seconds"] = report.duration


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _criteria[item.nodeid] = {"number": m.args[0], "title": m.args[1], "status": "NOT RUN", "seconds": 0.0}


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for info in sorted(_criteria.values(), key=lambda i: i["number"]):
        terminalreporter.write_line(
            f"criterion {info['number']:>2}: {info['status']:<5} {info['title']} ({info['seconds']:.1f}s)"
        )
