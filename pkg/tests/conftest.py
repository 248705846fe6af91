from __future__ import annotations

import pytest

_LINES: list[str] = []


@pytest.fixture
def criterion_log():
    """Record one verdict line per acceptance criterion; printed in the terminal summary."""

    def log(label: str, passed: bool, detail: str) -> None:
        line = f"{'PASS' if passed else 'FAIL'}  {label}: {detail}"
        _LINES.append(line)
        print(line)

    return log


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
