import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def report():
    """Record one summary line per acceptance criterion."""

    def record(number: int, ok: bool | None, detail: str) -> None:
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        ACCEPTANCE[number] = f"criterion {number:2d} {status}: {detail}"
        print(ACCEPTANCE[number])

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
