import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def frozen():
    return json.loads((Path(__file__).parent / "data" / "frozen.json").read_text())


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
