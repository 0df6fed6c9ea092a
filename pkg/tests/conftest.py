import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_VERDICTS = []


class Verdict:
    """Records one pass/fail line per acceptance criterion and fails the test on a miss."""

    def __init__(self, capsys):
        self._capsys = capsys

    def __call__(self, label: str, ok: bool, detail: str = "") -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {label}: {detail}"
        _VERDICTS.append(line)
        with self._capsys.disabled():
            print("\n" + line)
        assert ok, line


@pytest.fixture
def verdict(capsys):
    return Verdict(capsys)


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
