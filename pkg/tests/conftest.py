import json
import os
import tempfile
from pathlib import Path

import pytest

os.environ.setdefault("LFPP_CACHE_DIR", str(Path(tempfile.gettempdir()) / "lfpp_test_cache"))

DATA = Path(__file__).parent / "data"

# Criterion results shared between tests/test_acceptance.py and the terminal summary.
ACCEPTANCE_RESULTS: dict = {}


@pytest.fixture(scope="session")
def oracles() -> dict:
    return json.loads((DATA / "oracles.json").read_text())


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        res = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(res.line())
        for note in res.notes:
            terminalreporter.write_line(f"    note: {note}")
