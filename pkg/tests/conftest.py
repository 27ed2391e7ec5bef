"""Reporting for the acceptance suite: one PASS/FAIL line per criterion in the terminal summary."""
import pytest

_RESULTS: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or not (report.when == "call" or report.failed):
        return
    number, title = mark.args
    entry = _RESULTS.setdefault(number, {"title": title, "passed": 0, "failed": []})
    if report.passed:
        entry["passed"] += 1
    else:
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        total = entry["passed"] + len(entry["failed"])
        status = "PASS" if not entry["failed"] else "FAIL"
        line = f"AC{number} {status}  {entry['title']}  ({entry['passed']}/{total} checks)"
        if entry["failed"]:
            line += "  failed: " + ", ".join(entry["failed"])
        terminalreporter.write_line(line)
