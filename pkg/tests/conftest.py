"""Acceptance reporting: one PASS/FAIL line per numbered criterion."""
from __future__ import annotations

import pytest

_OUTCOMES: dict[int, list[bool]] = {}
_TITLES: dict[int, str] = {}
_NOTES: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def _criterion(item):
    mark = item.get_closest_marker("criterion")
    return None if mark is None else (mark.args[0], mark.args[1])


def pytest_collection_modifyitems(items):
    for item in items:
        c = _criterion(item)
        if c:
            _TITLES[c[0]] = c[1]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    c = _criterion(item)
    if c is None:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        _OUTCOMES.setdefault(c[0], []).append(report.passed)


@pytest.fixture
def note(request):
    """Record a measured value to show next to the criterion's verdict."""
    c = _criterion(request.node)

    def add(text: str) -> None:
        if c is not None:
            _NOTES.setdefault(c[0], []).append(text)

    return add


def pytest_terminal_summary(terminalreporter):
    if not _TITLES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_TITLES):
        results = _OUTCOMES.get(number)
        if not results:
            verdict = "NOT RUN"
        else:
            verdict = "PASS" if all(results) else "FAIL"
        line = f"criterion {number:>2}  {verdict:<7} {_TITLES[number]}"
        notes = _NOTES.get(number)
        if notes:
            line += "  [" + "; ".join(notes) + "]"
        tr.write_line(line)
