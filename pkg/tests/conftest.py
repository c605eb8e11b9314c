import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oncv.corpus import ingest_corpus  # noqa: E402
from oncv.data import load_dataset  # noqa: E402
from oncv.policy import FIXTURE_DIR  # noqa: E402

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def fixture_index():
    return ingest_corpus(FIXTURE_DIR / "corpus.jsonl")


@pytest.fixture(scope="session")
def fixture_samples():
    return load_dataset(FIXTURE_DIR / "dataset.jsonl")


# acceptance summary: one line per criterion, printed after the run
SUITE_BUDGET_S = 60.0
ACCEPTANCE_LINES: dict[int, str] = {}
_T0 = time.monotonic()


def record_criterion(n: int, ok: bool, detail: str) -> str:
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[n] = line
    return line


def pytest_sessionfinish(session, exitstatus):
    elapsed = time.monotonic() - _T0
    if 9 in ACCEPTANCE_LINES:
        ok = elapsed < SUITE_BUDGET_S and ACCEPTANCE_LINES[9].split()[2] == "PASS"
        ACCEPTANCE_LINES[9] += f"; full suite {elapsed:.1f}s (budget {SUITE_BUDGET_S:.0f}s)"
        if not ok:
            ACCEPTANCE_LINES[9] = ACCEPTANCE_LINES[9].replace("PASS", "FAIL", 1)
            session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
