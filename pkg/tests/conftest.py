"""Shared pytest hooks.

Acceptance tests carry ``@pytest.mark.criterion(number, title)``.  Their
outcomes, plus any ``criterion_detail`` user property, are collected and
printed as one PASS/FAIL line per criterion at the end of the run.
"""

import pytest

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    failed = report.failed
    if report.when == "call" or failed:
        detail = dict(item.user_properties).get("criterion_detail", "")
        prev = _results.get(number)
        if prev is None or not prev[1] or failed:
            _results[number] = (title, not failed and report.when == "call", detail)


@pytest.fixture
def detail(request):
    """Attach a one-line summary to the acceptance line of this test."""

    def record(text):
        request.node.user_properties.append(("criterion_detail", text))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        title, ok, text = _results[number]
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}"
        if text:
            line += f"  [{text}]"
        terminalreporter.write_line(line)
