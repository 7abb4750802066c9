import json
import sys
from pathlib import Path

import pytest

from planreward.protocol import parse_trajectory
from planreward.rewards import GoldRecord

FIXTURES = Path(__file__).parent / "fixtures"
sys.path.insert(0, str(Path(__file__).parent))

# Filled by test_acceptance.py; printed once at the end of the run.
ACCEPTANCE_RESULTS: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture(scope="session")
def worked_trace_text():
    return (FIXTURES / "worked_trace.txt").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def worked_trace(worked_trace_text):
    return parse_trajectory(worked_trace_text)


@pytest.fixture(scope="session")
def worked_gold_row():
    return json.loads((FIXTURES / "worked_trace_gold.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def worked_gold(worked_gold_row):
    return GoldRecord.from_dict(worked_gold_row)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, ok, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})")
