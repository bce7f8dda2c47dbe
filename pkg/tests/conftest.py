"""Collects acceptance verdicts and prints them after the run."""

from __future__ import annotations

VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):  # noqa: ANN001
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
