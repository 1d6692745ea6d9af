"""Collects acceptance outcomes and prints one line per criterion at the end of the run."""

import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): numbered acceptance criterion")


@pytest.fixture(autouse=True)
def _tag_criterion(request, record_property):
    mark = request.node.get_closest_marker("criterion")
    if mark is not None:
        record_property("criterion", mark.args)


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        number, title = props["criterion"]
        _RESULTS[number] = (title, report.outcome, props.get("measured", ""))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, outcome, measured = _RESULTS[number]
        status = "PASS" if outcome == "passed" else "FAIL"
        line = f"[{status}] #{number} {title}"
        if measured:
            line += f" -- {measured}"
        terminalreporter.write_line(line)
