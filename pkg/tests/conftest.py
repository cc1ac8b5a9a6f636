import os
import sys

from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

# fixed example generation so a green run stays green
settings.register_profile("repro", derandomize=True)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repro"))

_acceptance = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        reason = ""
        if report.outcome == "skipped" and isinstance(report.longrepr, tuple):
            reason = f" ({report.longrepr[2]})"
        _acceptance.append(f"{status}  {report.nodeid.split('::')[-1]}{reason}")


def pytest_terminal_summary(terminalreporter):
    if _acceptance:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance:
            terminalreporter.write_line(line)
