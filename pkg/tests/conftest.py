import re

import pytest

_VERDICTS = []


@pytest.fixture
def verdict():
    """Record one ``criterion N: PASS|FAIL`` line; all lines are repeated in the terminal summary."""

    def record(number: int, passed: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _VERDICTS.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(re.search(r"\d+", s).group())):
            terminalreporter.write_line(line)
