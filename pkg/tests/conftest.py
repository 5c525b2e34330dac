"""Collects outcomes of tests marked ``criterion(n)`` and prints one verdict
line per criterion at the end of the session."""

import pytest

_OUTCOMES: dict[int, list[bool]] = {}
_TITLES: dict[int, str] = {}


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    report = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None and (report.when == "call" or report.failed):
        n = marker.args[0]
        _TITLES.setdefault(n, marker.kwargs.get("title", ""))
        _OUTCOMES.setdefault(n, []).append(report.passed and not report.skipped
                                           if report.when == "call" else False)
    return report


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_OUTCOMES):
        results = _OUTCOMES[n]
        verdict = "PASS" if results and all(results) else "FAIL"
        terminalreporter.write_line(
            f"criterion {n}: {verdict}  ({sum(results)}/{len(results)} checks)  {_TITLES[n]}")
