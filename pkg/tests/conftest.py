"""Shared pytest hooks: print the acceptance scoreboard after the run."""
from __future__ import annotations

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    module = sys.modules.get("test_acceptance") or sys.modules.get(
        "tests.test_acceptance"
    )
    lines = getattr(module, "SCOREBOARD", None)
    if lines:
        terminalreporter.section("acceptance scoreboard")
        for line in lines:
            terminalreporter.write_line(line)
