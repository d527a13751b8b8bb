"""Shared pytest wiring.

The acceptance tests register one line per shipping criterion here; the
terminal summary replays them so the measured numbers survive output
capture under a plain ``pytest -v`` run.
"""

CRITERION_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in CRITERION_LINES:
        terminalreporter.line(line)
