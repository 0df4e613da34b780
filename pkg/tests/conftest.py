import os
from pathlib import Path

import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_dir(tmp_path_factory) -> Path:
    """Run directory for the acceptance experiments.

    Set SAMO_ACCEPTANCE_DIR to keep artifacts; seeds already complete there are
    reused instead of retrained.
    """
    keep = os.environ.get("SAMO_ACCEPTANCE_DIR")
    if keep:
        path = Path(keep)
        path.mkdir(parents=True, exist_ok=True)
        return path
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture
def report():
    def add(result):
        line = result.line()
        ACCEPTANCE_LINES.append(line)
        print(line)
        return result
    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
