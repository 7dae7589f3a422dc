import pytest

_ACCEPT: dict = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and report.when == "call":
        _ACCEPT[report.nodeid.split("::")[-1]] = report.outcome
    elif "test_acceptance.py" in report.nodeid and report.when == "setup" and report.failed:
        _ACCEPT[report.nodeid.split("::")[-1]] = "error"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPT:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPT, key=lambda s: int(s.split("_")[1])):
        mark = "PASS" if _ACCEPT[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"{mark}  {name}")
