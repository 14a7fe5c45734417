"""Collects acceptance-criterion outcomes and prints one line per criterion."""

import pytest

_RESULTS = {}
_NOTES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture
def note(request):
    marker = request.node.get_closest_marker("criterion")

    def add(text):
        if marker is not None:
            _NOTES.setdefault(marker.args[0], []).append(text)
    return add


def pytest_runtest_logreport(report):
    marker = report.user_properties and dict(report.user_properties).get("criterion")
    if not marker:
        return
    number, title = marker
    if report.when == "call" or report.skipped or report.failed:
        prev = _RESULTS.get(number, (title, "PASS"))[1]
        status = "FAIL" if report.failed else "SKIP" if report.skipped else "PASS"
        # a criterion split over several tests fails if any part fails
        rank = {"PASS": 0, "SKIP": 1, "FAIL": 2}
        _RESULTS[number] = (title, max(prev, status, key=rank.get))


def pytest_itemcollected(item):
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        item.user_properties.append(("criterion", tuple(marker.args)))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS, key=lambda k: (int(str(k).split("-")[0]), str(k))):
        title, status = _RESULTS[number]
        line = f"criterion {str(number):>2} {status}: {title}"
        if _NOTES.get(number):
            line += "  [" + "; ".join(_NOTES[number]) + "]"
        terminalreporter.write_line(line)
