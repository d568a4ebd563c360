"""Test-run plumbing: one visible PASS/FAIL line per shipping criterion.

Any test named ``test_criterion_<NN>_<slug>`` is treated as a shipping gate;
after the run a summary section lists each gate with its verdict so the
acceptance status can be read without scanning the full test output.
"""

from __future__ import annotations

import re

_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")
_results: dict[int, list] = {}


def pytest_runtest_logreport(report):
    match = _CRITERION.search(report.nodeid)
    if match is None:
        return
    number = int(match.group(1))
    slot = _results.setdefault(number, [match.group(2), "passed"])
    if report.when == "setup" and report.skipped:
        slot[1] = "skipped"
    elif report.failed:
        slot[1] = "failed"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        slug, outcome = _results[number]
        verdict = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[outcome]
        label = slug.replace("_", " ")
        terminalreporter.write_line(f"criterion {number:2d} ({label}): {verdict}")
