import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def report():
    """Record one acceptance outcome; the summary prints them in order."""

    def record(key: str, passed: bool, detail: str) -> bool:
        _RESULTS[key] = (bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_RESULTS, key=lambda k: int(k[1:])):
        passed, detail = _RESULTS[key]
        terminalreporter.write_line(f"{key} {'PASS' if passed else 'FAIL'}: {detail}")
